//! Convex QP solver for the per-iteration scenario program.
//!
//! Operator splitting in the OSQP style: the constraint set (equalities,
//! one-sided inequality rows, and variable boxes) is stacked behind a
//! projection, the x-update solves a fixed normal-equation matrix factored
//! once per ρ setting with a banded Cholesky, and iterations use
//! over-relaxation. Converged iterates are polished on the detected active
//! set through a regularized KKT solve with iterative refinement, which
//! drops the KKT residual to near machine precision and makes warm/cold
//! starts land on the same primal point.

pub mod band;
pub mod oracle;

use band::{BandChol, SymBand};

/// Unconditional Hessian shift; contouring Gauss-Newton Hessians are
/// singular along the heading and slack directions.
pub const HESSIAN_SHIFT: f64 = 1e-8;

const SIGMA: f64 = 1e-6;
const ALPHA: f64 = 1.6;
const RHO_INIT: f64 = 0.1;
const RHO_EQ_SCALE: f64 = 1e3;
const CHECK_EVERY: usize = 25;
const POLISH_DELTA: f64 = 1e-7;

#[derive(Debug, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Hessian not positive semi-definite after regularization")]
    NotPsd,
    #[error("constraint references column {0} beyond {1} variables")]
    BadColumn(usize, usize),
    #[error("lower bound exceeds upper bound at variable {0}")]
    EmptyBox(usize),
}

/// Rows of a sparse linear operator, each a list of (column, coefficient).
#[derive(Debug, Clone, Default)]
pub struct LinearConstraints {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

impl LinearConstraints {
    pub fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Quadratic program
///   min ½ xᵀHx + qᵀx
///   s.t. E x = h,  A x ≤ b,  lower ≤ x ≤ upper.
///
/// The stored Hessian already carries the unconditional `HESSIAN_SHIFT`
/// regularization; construction fails if the shifted matrix is not
/// positive definite.
#[derive(Debug, Clone)]
pub struct QpProblem {
    n: usize,
    hessian: SymBand,
    gradient: Vec<f64>,
    eq: LinearConstraints,
    ineq: LinearConstraints,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Widest column span of any constraint row; sets the normal-matrix band.
    row_span: usize,
}

impl QpProblem {
    /// Builds and validates a problem. Hessian triplets name each
    /// off-diagonal entry once (either triangle) and diagonals once.
    pub fn new(
        n: usize,
        hessian_triplets: &[(usize, usize, f64)],
        gradient: Vec<f64>,
        eq: LinearConstraints,
        ineq: LinearConstraints,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, QpError> {
        if gradient.len() != n || lower.len() != n || upper.len() != n {
            return Err(QpError::Dimension(format!(
                "n={n}, gradient={}, lower={}, upper={}",
                gradient.len(),
                lower.len(),
                upper.len()
            )));
        }
        if eq.rows.len() != eq.rhs.len() || ineq.rows.len() != ineq.rhs.len() {
            return Err(QpError::Dimension("constraint rows vs rhs".into()));
        }
        for i in 0..n {
            if lower[i] > upper[i] {
                return Err(QpError::EmptyBox(i));
            }
        }
        let mut bw = 0usize;
        for &(i, j, _) in hessian_triplets {
            if i >= n || j >= n {
                return Err(QpError::BadColumn(i.max(j), n));
            }
            bw = bw.max(i.abs_diff(j));
        }
        let mut hessian = SymBand::zeros(n, bw);
        for &(i, j, v) in hessian_triplets {
            hessian.add(i, j, v);
        }
        for i in 0..n {
            hessian.add(i, i, HESSIAN_SHIFT);
        }
        if n > 0 && hessian.cholesky().is_none() {
            return Err(QpError::NotPsd);
        }
        let mut row_span = 0usize;
        for rows in [&eq.rows, &ineq.rows] {
            for row in rows {
                let mut lo = usize::MAX;
                let mut hi = 0usize;
                for &(c, _) in row {
                    if c >= n {
                        return Err(QpError::BadColumn(c, n));
                    }
                    lo = lo.min(c);
                    hi = hi.max(c);
                }
                if !row.is_empty() {
                    row_span = row_span.max(hi - lo);
                }
            }
        }
        Ok(Self {
            n,
            hessian,
            gradient,
            eq,
            ineq,
            lower,
            upper,
            row_span,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_eq(&self) -> usize {
        self.eq.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq.len()
    }

    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub fn eq_constraints(&self) -> &LinearConstraints {
        &self.eq
    }

    pub fn ineq_constraints(&self) -> &LinearConstraints {
        &self.ineq
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    /// ½xᵀHx + qᵀx with the regularized Hessian.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut hx = vec![0.0; self.n];
        self.hessian.mul_vec(x, &mut hx);
        0.5 * dot(&hx, x) + dot(&self.gradient, x)
    }

    /// Dense copy of the (regularized) Hessian, for oracles and tests.
    pub fn dense_hessian(&self) -> nalgebra::DMatrix<f64> {
        let mut h = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                h[(i, j)] = self.hessian.get(i, j);
            }
        }
        h
    }

    fn num_rows(&self) -> usize {
        self.eq.len() + self.ineq.len() + self.n
    }

    /// z = C x for the stacked operator [E; A; I].
    fn apply(&self, x: &[f64], z: &mut [f64]) {
        let mut idx = 0;
        for row in &self.eq.rows {
            z[idx] = row.iter().map(|&(c, v)| v * x[c]).sum();
            idx += 1;
        }
        for row in &self.ineq.rows {
            z[idx] = row.iter().map(|&(c, v)| v * x[c]).sum();
            idx += 1;
        }
        z[idx..idx + self.n].copy_from_slice(x);
    }

    /// out += Cᵀ w.
    fn apply_transpose(&self, w: &[f64], out: &mut [f64]) {
        let mut idx = 0;
        for row in &self.eq.rows {
            let wi = w[idx];
            if wi != 0.0 {
                for &(c, v) in row {
                    out[c] += v * wi;
                }
            }
            idx += 1;
        }
        for row in &self.ineq.rows {
            let wi = w[idx];
            if wi != 0.0 {
                for &(c, v) in row {
                    out[c] += v * wi;
                }
            }
            idx += 1;
        }
        for c in 0..self.n {
            out[c] += w[idx + c];
        }
    }

    fn row_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.num_rows();
        let mut l = vec![f64::NEG_INFINITY; m];
        let mut u = vec![f64::INFINITY; m];
        for (i, &h) in self.eq.rhs.iter().enumerate() {
            l[i] = h;
            u[i] = h;
        }
        let off = self.eq.len();
        for (i, &b) in self.ineq.rhs.iter().enumerate() {
            u[off + i] = b;
        }
        let off = off + self.ineq.len();
        l[off..off + self.n].copy_from_slice(&self.lower);
        u[off..off + self.n].copy_from_slice(&self.upper);
        (l, u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    PrimalInfeasible,
    MaxIter,
}

/// Solver output: primal point, duals per constraint block, and the
/// verified KKT residual of the returned iterate.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub primal: Vec<f64>,
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    /// Signed box duals: positive pushes at the upper bound.
    pub bound_duals: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Max of stationarity, primal feasibility, and complementarity residuals
/// (∞-norms) for a candidate solution.
pub fn kkt_residual(problem: &QpProblem, solution: &QpSolution) -> f64 {
    let n = problem.n;
    if n == 0 {
        return 0.0;
    }
    let x = &solution.primal;
    // Stationarity: Hx + q + Eᵀλe + Aᵀλi + μ.
    let mut grad = vec![0.0; n];
    problem.hessian.mul_vec(x, &mut grad);
    for i in 0..n {
        grad[i] += problem.gradient[i];
    }
    for (row, &lam) in problem.eq.rows.iter().zip(&solution.eq_duals) {
        for &(c, v) in row {
            grad[c] += v * lam;
        }
    }
    for (row, &lam) in problem.ineq.rows.iter().zip(&solution.ineq_duals) {
        for &(c, v) in row {
            grad[c] += v * lam;
        }
    }
    for i in 0..n {
        grad[i] += solution.bound_duals[i];
    }
    let stationarity = inf_norm(&grad);

    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for (row, &h) in problem.eq.rows.iter().zip(&problem.eq.rhs) {
        let r: f64 = row.iter().map(|&(c, v)| v * x[c]).sum::<f64>() - h;
        primal = primal.max(r.abs());
    }
    for ((row, &b), &lam) in problem
        .ineq
        .rows
        .iter()
        .zip(&problem.ineq.rhs)
        .zip(&solution.ineq_duals)
    {
        let slack: f64 = row.iter().map(|&(c, v)| v * x[c]).sum::<f64>() - b;
        primal = primal.max(slack);
        comp = comp.max((lam * slack).abs());
    }
    for i in 0..n {
        primal = primal.max(problem.lower[i] - x[i]);
        primal = primal.max(x[i] - problem.upper[i]);
        let mu = solution.bound_duals[i];
        if mu > 0.0 {
            let dist = if problem.upper[i].is_finite() {
                (x[i] - problem.upper[i]).abs()
            } else {
                1.0
            };
            comp = comp.max(mu * dist);
        } else if mu < 0.0 {
            let dist = if problem.lower[i].is_finite() {
                (x[i] - problem.lower[i]).abs()
            } else {
                1.0
            };
            comp = comp.max(-mu * dist);
        }
    }
    stationarity.max(primal).max(comp)
}

/// Cold-started solve; see [`solve_qp_warm`].
pub fn solve_qp(problem: &QpProblem, tol: f64, max_iter: usize) -> QpSolution {
    solve_qp_warm(problem, tol, max_iter, None)
}

/// Solves the QP, optionally warm-starting primal and duals from a prior
/// solution of an identically-shaped problem.
pub fn solve_qp_warm(
    problem: &QpProblem,
    tol: f64,
    max_iter: usize,
    warm: Option<&QpSolution>,
) -> QpSolution {
    let n = problem.n;
    if n == 0 {
        return QpSolution {
            primal: vec![],
            eq_duals: vec![],
            ineq_duals: vec![],
            bound_duals: vec![],
            status: QpStatus::Optimal,
            iterations: 0,
            kkt_residual: 0.0,
        };
    }
    let m = problem.num_rows();
    let (l, u) = problem.row_bounds();
    let m_eq = problem.eq.len();
    let m_in = problem.ineq.len();

    let mut rho = std::env::var("RISKMPC_QP_RHO")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(RHO_INIT);
    let rho_row = |rho: f64, idx: usize| -> f64 {
        if idx < m_eq {
            rho * RHO_EQ_SCALE
        } else {
            rho
        }
    };

    let factor = |rho: f64| -> BandChol {
        let bw = problem.hessian.bandwidth().max(problem.row_span);
        let mut msys = SymBand::zeros(n, bw);
        for j in 0..n {
            for i in j..(j + problem.hessian.bandwidth() + 1).min(n) {
                let v = problem.hessian.get(i, j);
                if v != 0.0 {
                    msys.add(i, j, v);
                }
            }
            msys.add(j, j, SIGMA + rho); // identity (box) rows contribute rho
        }
        let mut add_rows = |rows: &Vec<Vec<(usize, f64)>>, r: f64| {
            for row in rows {
                for (a_idx, &(ci, vi)) in row.iter().enumerate() {
                    for &(cj, vj) in &row[a_idx..] {
                        if ci <= cj {
                            msys.add(cj, ci, r * vi * vj);
                        } else {
                            msys.add(ci, cj, r * vi * vj);
                        }
                    }
                }
            }
        };
        add_rows(&problem.eq.rows, rho * RHO_EQ_SCALE);
        add_rows(&problem.ineq.rows, rho);
        msys.cholesky().expect("normal matrix is PD by construction")
    };
    let mut chol = factor(rho);

    let mut x = vec![0.0; n];
    let mut y = vec![0.0; m];
    let mut z = vec![0.0; m];
    if let Some(w) = warm {
        if w.primal.len() == n
            && w.eq_duals.len() == m_eq
            && w.ineq_duals.len() == m_in
            && w.bound_duals.len() == n
        {
            x.copy_from_slice(&w.primal);
            y[..m_eq].copy_from_slice(&w.eq_duals);
            y[m_eq..m_eq + m_in].copy_from_slice(&w.ineq_duals);
            y[m_eq + m_in..].copy_from_slice(&w.bound_duals);
            problem.apply(&x, &mut z);
            for i in 0..m {
                z[i] = z[i].clamp(l[i], u[i]);
            }
        }
    }

    let mut ztil = vec![0.0; m];
    let mut rhs = vec![0.0; n];
    let mut work_m = vec![0.0; m];
    let mut y_prev_check = y.clone();
    let mut best: Option<QpSolution> = None;
    let mut last_polish_iter = 0usize;
    let mut stag_reference = f64::INFINITY;
    let mut stag_counter = 0usize;

    let finish = |x: Vec<f64>, y: &[f64], status: QpStatus, iters: usize| -> QpSolution {
        let mut sol = QpSolution {
            primal: x,
            eq_duals: y[..m_eq].to_vec(),
            ineq_duals: y[m_eq..m_eq + m_in].to_vec(),
            bound_duals: y[m_eq + m_in..].to_vec(),
            status,
            iterations: iters,
            kkt_residual: 0.0,
        };
        sol.kkt_residual = kkt_residual(problem, &sol);
        sol
    };

    let mut iter = 0usize;
    while iter < max_iter {
        iter += 1;
        // x-update: M x̃ = σx − q + Cᵀ(ρz − y)
        for i in 0..m {
            work_m[i] = rho_row(rho, i) * z[i] - y[i];
        }
        for i in 0..n {
            rhs[i] = SIGMA * x[i] - problem.gradient[i];
        }
        problem.apply_transpose(&work_m, &mut rhs);
        chol.solve_in_place(&mut rhs);
        let xtil = &rhs;
        problem.apply(xtil, &mut ztil);
        // Over-relaxed updates.
        for i in 0..n {
            x[i] = ALPHA * xtil[i] + (1.0 - ALPHA) * x[i];
        }
        for i in 0..m {
            let w = ALPHA * ztil[i] + (1.0 - ALPHA) * z[i] + y[i] / rho_row(rho, i);
            let znew = w.clamp(l[i], u[i]);
            // y⁺ = y + ρ(αz̃ + (1−α)z − z⁺) collapses to ρ(w − z⁺).
            y[i] = rho_row(rho, i) * (w - znew);
            z[i] = znew;
        }

        if iter % CHECK_EVERY != 0 && iter != max_iter {
            continue;
        }

        // Residuals.
        problem.apply(&x, &mut work_m);
        let mut r_prim: f64 = 0.0;
        let mut z_norm: f64 = 0.0;
        let mut cx_norm: f64 = 0.0;
        for i in 0..m {
            r_prim = r_prim.max((work_m[i] - z[i]).abs());
            z_norm = z_norm.max(z[i].abs());
            cx_norm = cx_norm.max(work_m[i].abs());
        }
        let mut grad = vec![0.0; n];
        problem.hessian.mul_vec(&x, &mut grad);
        let hx_norm = inf_norm(&grad);
        let mut cty = vec![0.0; n];
        problem.apply_transpose(&y, &mut cty);
        let cty_norm = inf_norm(&cty);
        let mut r_dual: f64 = 0.0;
        for i in 0..n {
            r_dual = r_dual.max((grad[i] + problem.gradient[i] + cty[i]).abs());
        }

        // Primal infeasibility certificate on the dual increment.
        let mut dy_norm: f64 = 0.0;
        for i in 0..m {
            dy_norm = dy_norm.max((y[i] - y_prev_check[i]).abs());
        }
        if dy_norm > 1e-12 {
            let mut cdy = vec![0.0; n];
            let dy: Vec<f64> = y
                .iter()
                .zip(&y_prev_check)
                .map(|(a, b)| (a - b) / dy_norm)
                .collect();
            problem.apply_transpose(&dy, &mut cdy);
            let eps_inf = 1e-8;
            if inf_norm(&cdy) <= eps_inf {
                let mut support = 0.0;
                let mut valid = true;
                for i in 0..m {
                    if dy[i] > eps_inf {
                        if !u[i].is_finite() {
                            valid = false;
                            break;
                        }
                        support += u[i] * dy[i];
                    } else if dy[i] < -eps_inf {
                        if !l[i].is_finite() {
                            valid = false;
                            break;
                        }
                        support += l[i] * dy[i];
                    }
                }
                if valid && support < -eps_inf {
                    return finish(x, &y, QpStatus::PrimalInfeasible, iter);
                }
            }
        }
        y_prev_check.copy_from_slice(&y);

        // Stagnation of the primal residual on an unconverged iterate is
        // treated as infeasibility (slacked callers should never hit it).
        if r_prim > (1e2 * tol).max(1e-4) {
            if r_prim > 0.95 * stag_reference {
                stag_counter += CHECK_EVERY;
            } else {
                stag_counter = 0;
                stag_reference = r_prim;
            }
            if stag_counter >= 400 && iter >= 800 {
                return finish(x, &y, QpStatus::PrimalInfeasible, iter);
            }
        } else {
            stag_counter = 0;
            stag_reference = r_prim.min(stag_reference);
        }

        let converged = r_prim < tol && r_dual < tol;
        let loose = r_prim < (1e2 * tol).max(1e-3) && r_dual < (1e2 * tol).max(1e-3);
        if (converged || loose) && iter >= last_polish_iter + 4 * CHECK_EVERY {
            last_polish_iter = iter;
            if let Some(polished) = polish(problem, &x, &y, tol) {
                return QpSolution {
                    iterations: iter,
                    ..polished
                };
            }
            if converged {
                let cand = finish(x.clone(), &y, QpStatus::Optimal, iter);
                if cand.kkt_residual < tol {
                    return cand;
                }
                match &best {
                    Some(b) if b.kkt_residual <= cand.kkt_residual => {}
                    _ => best = Some(cand),
                }
            }
        }

        // ρ adaptation on the residual balance.
        if iter % (4 * CHECK_EVERY) == 0 {
            let rp_rel = r_prim / cx_norm.max(z_norm).max(1.0);
            let rd_rel = r_dual / hx_norm.max(cty_norm).max(inf_norm(&problem.gradient)).max(1.0);
            let ratio = (rp_rel / rd_rel.max(1e-16)).sqrt();
            if ratio > 5.0 || ratio < 0.2 {
                rho = (rho * ratio).clamp(1e-6, 1e6);
                chol = factor(rho);
            }
        }
    }

    match best {
        Some(b) => QpSolution {
            status: QpStatus::Optimal,
            iterations: max_iter,
            ..b
        },
        None => finish(x, &y, QpStatus::MaxIter, max_iter),
    }
}

/// Active-set polish: re-solves the equality-constrained QP on the
/// detected active set through a regularized KKT system with iterative
/// refinement, then repairs the guess with a few add/remove passes
/// (sign-violating rows leave, violated inactive rows join). Returns None
/// when no consistent active set emerges within the pass budget.
fn polish(problem: &QpProblem, x_admm: &[f64], y: &[f64], tol: f64) -> Option<QpSolution> {
    let n = problem.n;
    let m_eq = problem.eq.len();
    let m_in = problem.ineq.len();

    #[derive(Clone, Copy, PartialEq)]
    enum ActiveKind {
        Eq(usize),
        Ineq(usize),
        Lower(usize),
        Upper(usize),
    }

    // Initial guess: all equalities, tight or pushed inequalities, tight
    // or pushed bounds.
    let mut active: Vec<ActiveKind> = (0..m_eq).map(ActiveKind::Eq).collect();
    let mut cx = vec![0.0; problem.num_rows()];
    problem.apply(x_admm, &mut cx);
    for i in 0..m_in {
        let slack = problem.ineq.rhs[i] - cx[m_eq + i];
        if y[m_eq + i] > 1e-8 || slack < 1e-7 {
            active.push(ActiveKind::Ineq(i));
        }
    }
    for i in 0..n {
        let mu = y[m_eq + m_in + i];
        if problem.lower[i].is_finite() && (mu < -1e-8 || x_admm[i] - problem.lower[i] < 1e-7) {
            active.push(ActiveKind::Lower(i));
        } else if problem.upper[i].is_finite()
            && (mu > 1e-8 || problem.upper[i] - x_admm[i] < 1e-7)
        {
            active.push(ActiveKind::Upper(i));
        }
    }

    let row_of = |kind: &ActiveKind| -> (Vec<(usize, f64)>, f64) {
        match *kind {
            ActiveKind::Eq(i) => (problem.eq.rows[i].clone(), problem.eq.rhs[i]),
            ActiveKind::Ineq(i) => (problem.ineq.rows[i].clone(), problem.ineq.rhs[i]),
            ActiveKind::Lower(i) => (vec![(i, 1.0)], problem.lower[i]),
            ActiveKind::Upper(i) => (vec![(i, 1.0)], problem.upper[i]),
        }
    };

    // H̃ = H + δI, banded, factored once.
    let bw = problem.hessian.bandwidth();
    let mut htil = SymBand::zeros(n, bw);
    for j in 0..n {
        for i in j..(j + bw + 1).min(n) {
            let v = problem.hessian.get(i, j);
            if v != 0.0 {
                htil.add(i, j, v);
            }
        }
        htil.add(j, j, POLISH_DELTA);
    }
    let hchol = htil.cholesky()?;

    for _pass in 0..6 {
        let m_act = active.len();
        let act_rows: Vec<(Vec<(usize, f64)>, f64)> = active.iter().map(row_of).collect();

        // X = H̃⁻¹ C_actᵀ (column per active row), S = C_act X + δI.
        let mut xcols = vec![0.0; n * m_act];
        for (k, (row, _)) in act_rows.iter().enumerate() {
            let col = &mut xcols[k * n..(k + 1) * n];
            for &(c, v) in row {
                col[c] = v;
            }
            hchol.solve_in_place(col);
        }
        let mut s = nalgebra::DMatrix::<f64>::zeros(m_act, m_act);
        for a in 0..m_act {
            for (b, (row, _)) in act_rows.iter().enumerate().skip(a) {
                let xa = &xcols[a * n..(a + 1) * n];
                let v: f64 = row.iter().map(|&(c, w)| w * xa[c]).sum();
                s[(a, b)] = v;
                s[(b, a)] = v;
            }
            s[(a, a)] += POLISH_DELTA;
        }
        let schol = s.cholesky()?;

        // Refinement against the unregularized KKT system from zero.
        let mut xp = vec![0.0; n];
        let mut nu = vec![0.0; m_act];
        for _ in 0..4 {
            let mut r1 = vec![0.0; n];
            problem.hessian.mul_vec(&xp, &mut r1);
            for i in 0..n {
                r1[i] = -problem.gradient[i] - r1[i];
            }
            for (k, (row, _)) in act_rows.iter().enumerate() {
                for &(c, v) in row {
                    r1[c] -= v * nu[k];
                }
            }
            let mut r2 = vec![0.0; m_act];
            for (k, (row, rhs)) in act_rows.iter().enumerate() {
                r2[k] = rhs - row.iter().map(|&(c, v)| v * xp[c]).sum::<f64>();
            }
            if inf_norm(&r1) < 1e-12 && inf_norm(&r2) < 1e-12 {
                break;
            }
            let mut dx0 = r1.clone();
            hchol.solve_in_place(&mut dx0);
            let mut srhs = nalgebra::DVector::<f64>::zeros(m_act);
            for (k, (row, _)) in act_rows.iter().enumerate() {
                srhs[k] = row.iter().map(|&(c, v)| v * dx0[c]).sum::<f64>() - r2[k];
            }
            let dnu = schol.solve(&srhs);
            for i in 0..n {
                let mut corr = 0.0;
                for k in 0..m_act {
                    corr += xcols[k * n + i] * dnu[k];
                }
                xp[i] += dx0[i] - corr;
            }
            for k in 0..m_act {
                nu[k] += dnu[k];
            }
        }

        // Remove rows whose duals violate their sign.
        let mut keep = vec![true; m_act];
        let mut removed = false;
        for (k, kind) in active.iter().enumerate() {
            let bad = match kind {
                ActiveKind::Eq(_) => false,
                ActiveKind::Ineq(_) | ActiveKind::Upper(_) => nu[k] < -1e-7,
                ActiveKind::Lower(_) => nu[k] > 1e-7,
            };
            if bad {
                keep[k] = false;
                removed = true;
            }
        }
        if removed {
            let mut idx = 0;
            active.retain(|_| {
                let k = keep[idx];
                idx += 1;
                k
            });
            continue;
        }

        // Add inactive rows the polished point violates.
        let mut added = false;
        for i in 0..m_in {
            if active.contains(&ActiveKind::Ineq(i)) {
                continue;
            }
            let lhs: f64 = problem.ineq.rows[i]
                .iter()
                .map(|&(c, v)| v * xp[c])
                .sum();
            if lhs > problem.ineq.rhs[i] + 1e-9 {
                active.push(ActiveKind::Ineq(i));
                added = true;
            }
        }
        for i in 0..n {
            let at_lower = active.contains(&ActiveKind::Lower(i));
            let at_upper = active.contains(&ActiveKind::Upper(i));
            if !at_lower && problem.lower[i].is_finite() && xp[i] < problem.lower[i] - 1e-9 {
                active.push(ActiveKind::Lower(i));
                added = true;
            } else if !at_upper && problem.upper[i].is_finite() && xp[i] > problem.upper[i] + 1e-9
            {
                active.push(ActiveKind::Upper(i));
                added = true;
            }
        }
        if added {
            continue;
        }

        // Consistent active set: map duals back and verify.
        let mut sol = QpSolution {
            primal: xp,
            eq_duals: vec![0.0; m_eq],
            ineq_duals: vec![0.0; m_in],
            bound_duals: vec![0.0; n],
            status: QpStatus::Optimal,
            iterations: 0,
            kkt_residual: 0.0,
        };
        for (k, kind) in active.iter().enumerate() {
            match *kind {
                ActiveKind::Eq(i) => sol.eq_duals[i] = nu[k],
                ActiveKind::Ineq(i) => sol.ineq_duals[i] += nu[k].max(0.0),
                ActiveKind::Lower(i) => sol.bound_duals[i] += nu[k].min(0.0),
                ActiveKind::Upper(i) => sol.bound_duals[i] += nu[k].max(0.0),
            }
        }
        sol.kkt_residual = kkt_residual(problem, &sol);
        if sol.kkt_residual < tol {
            return Some(sol);
        }
        return None;
    }
    None
}
