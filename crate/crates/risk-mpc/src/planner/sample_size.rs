//! Scenario count from the risk/confidence/support relationship.
//!
//! The planner draws the smallest S such that a Binomial(S, ε) variable
//! stays at or below the assumed support size with probability at most β:
//! with that many scenarios, the probability that the optimizer's
//! violation probability exceeds ε is bounded by β.

#[derive(Debug, thiserror::Error)]
pub enum SampleSizeError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("beta must lie in (0, 1), got {0}")]
    BadBeta(f64),
    #[error("no sample count up to {0} satisfies the bound")]
    Capacity(usize),
}

const MAX_SAMPLES: usize = 10_000_000;

/// Binomial CDF P[X ≤ support] for X ~ Binomial(s, ε), evaluated in the
/// log domain so large S and tiny tails do not underflow.
pub fn binomial_tail(s: usize, support: usize, epsilon: f64) -> f64 {
    if support >= s {
        return 1.0;
    }
    let ln_eps = epsilon.ln();
    let ln_one_minus = (-epsilon).ln_1p();
    // ln C(s, j) built incrementally over j.
    let mut ln_choose = 0.0;
    let mut ln_terms = Vec::with_capacity(support + 1);
    for j in 0..=support {
        if j > 0 {
            ln_choose += ((s - j + 1) as f64).ln() - (j as f64).ln();
        }
        ln_terms.push(ln_choose + j as f64 * ln_eps + (s - j) as f64 * ln_one_minus);
    }
    let max = ln_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let sum: f64 = ln_terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln()).exp()
}

/// Smallest S with `binomial_tail(S, support, epsilon) ≤ beta`.
pub fn required_sample_size(
    epsilon: f64,
    beta: f64,
    support: usize,
) -> Result<usize, SampleSizeError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SampleSizeError::BadEpsilon(epsilon));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(SampleSizeError::BadBeta(beta));
    }
    // The tail is non-increasing in S for fixed support and ε, so double
    // to bracket and then bisect.
    let mut hi = (support + 1).max(1);
    let mut lo = support; // tail(S) = 1 for S ≤ support, never admissible
    while binomial_tail(hi, support, epsilon) > beta {
        lo = hi;
        hi *= 2;
        if hi > MAX_SAMPLES {
            return Err(SampleSizeError::Capacity(MAX_SAMPLES));
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if binomial_tail(mid, support, epsilon) <= beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
