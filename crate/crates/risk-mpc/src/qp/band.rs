//! Symmetric banded storage and Cholesky factorization.
//!
//! Stage-structured MPC data keeps every Hessian and normal-equation entry
//! within a narrow band of the diagonal; factor and solve cost n·bw² and
//! n·bw instead of n³ and n².

/// Symmetric matrix stored as its lower band: entry (i, j) with
/// j ≤ i ≤ j + bw lives at `data[j * (bw + 1) + (i - j)]`.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = if n == 0 { 0 } else { bw.min(n - 1) };
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Accumulates into the (i, j) entry; symmetric counterpart implied.
    /// Panics if |i − j| exceeds the allocated bandwidth.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(hi - lo <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        self.data[lo * (self.bw + 1) + (hi - lo)] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.bw {
            return 0.0;
        }
        self.data[lo * (self.bw + 1) + (hi - lo)]
    }

    /// y = A·x using the symmetric band.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for j in 0..self.n {
            let xj = x[j];
            let base = j * (self.bw + 1);
            y[j] += self.data[base] * xj;
            let top = (j + self.bw).min(self.n - 1);
            for i in j + 1..=top {
                let v = self.data[base + (i - j)];
                y[i] += v * xj;
                y[j] += v * x[i];
            }
        }
    }

    /// In-place lower Cholesky; fails on a non-positive pivot.
    pub fn cholesky(&self) -> Option<BandChol> {
        let mut l = self.clone();
        let bw = l.bw;
        for j in 0..l.n {
            let lo = j.saturating_sub(bw);
            let mut diag = l.data[j * (bw + 1)];
            for k in lo..j {
                let v = l.data[k * (bw + 1) + (j - k)];
                diag -= v * v;
            }
            if diag <= 0.0 || !diag.is_finite() {
                return None;
            }
            let diag = diag.sqrt();
            l.data[j * (bw + 1)] = diag;
            let top = (j + bw).min(l.n - 1);
            for i in j + 1..=top {
                let mut s = l.data[j * (bw + 1) + (i - j)];
                let lo2 = lo.max(i.saturating_sub(bw));
                for k in lo2..j {
                    s -= l.data[k * (bw + 1) + (i - k)] * l.data[k * (bw + 1) + (j - k)];
                }
                l.data[j * (bw + 1) + (i - j)] = s / diag;
            }
        }
        Some(BandChol { l })
    }
}

/// Lower Cholesky factor in band storage.
#[derive(Debug, Clone)]
pub struct BandChol {
    l: SymBand,
}

impl BandChol {
    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.l.n;
        let bw = self.l.bw;
        let data = &self.l.data;
        // Forward: L y = b.
        for j in 0..n {
            let base = j * (bw + 1);
            b[j] /= data[base];
            let yj = b[j];
            let top = (j + bw).min(n - 1);
            for i in j + 1..=top {
                b[i] -= data[base + (i - j)] * yj;
            }
        }
        // Backward: Lᵀ x = y.
        for j in (0..n).rev() {
            let base = j * (bw + 1);
            let top = (j + bw).min(n - 1);
            let mut s = b[j];
            for i in j + 1..=top {
                s -= data[base + (i - j)] * b[i];
            }
            b[j] = s / data[base];
        }
    }
}
