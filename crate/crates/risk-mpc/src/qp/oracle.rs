//! Brute-force reference solver for test comparison only.
//!
//! Enumerates every active set of the inequality rows, solves the dense
//! equality-constrained KKT system, and keeps the feasible,
//! dual-consistent candidate with the lowest objective. Exponential in the
//! number of inequalities and entirely independent of the iterative
//! solver, which is the point.

use nalgebra::{DMatrix, DVector};

use super::QpProblem;

/// Exact minimizer by exhaustive active-set enumeration. Problems must use
/// only inequality rows (no equalities, free bounds) and stay small; cost
/// is 2^m KKT solves. Returns None when no candidate passes feasibility.
pub fn active_set_solve(problem: &QpProblem) -> Option<Vec<f64>> {
    assert_eq!(problem.num_eq(), 0, "oracle handles inequality-only QPs");
    let n = problem.num_vars();
    let m = problem.num_ineq();
    assert!(m <= 20, "enumeration beyond 2^20 subsets is not sensible");
    let (lo, up) = problem.bounds();
    assert!(
        lo.iter().all(|v| v.is_infinite()) && up.iter().all(|v| v.is_infinite()),
        "oracle handles free-variable QPs"
    );

    let h = problem.dense_hessian();
    let q = DVector::from_column_slice(problem.gradient());
    let ineq = problem.ineq_constraints();
    let mut a = DMatrix::<f64>::zeros(m, n);
    for (r, row) in ineq.rows.iter().enumerate() {
        for &(c, v) in row {
            a[(r, c)] += v;
        }
    }
    let b = DVector::from_column_slice(&ineq.rhs);

    let feas_tol = 1e-8;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << m) {
        let act: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = act.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::<f64>::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        for (r, &i) in act.iter().enumerate() {
            for c in 0..n {
                kkt[(n + r, c)] = a[(i, c)];
                kkt[(c, n + r)] = a[(i, c)];
            }
        }
        let mut rhs = DVector::<f64>::zeros(n + k);
        for i in 0..n {
            rhs[i] = -q[i];
        }
        for (r, &i) in act.iter().enumerate() {
            rhs[n + r] = b[i];
        }
        let lu = kkt.lu();
        let Some(sol) = lu.solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let lambda = sol.rows(n, k);
        if lambda.iter().any(|&l| l < -feas_tol) {
            continue;
        }
        let ax = &a * &x;
        if (0..m).any(|i| ax[i] > b[i] + feas_tol) {
            continue;
        }
        let obj = 0.5 * (x.transpose() * &h * &x)[(0, 0)] + q.dot(&x);
        match &best {
            Some((best_obj, _)) if *best_obj <= obj => {}
            _ => best = Some((obj, x.as_slice().to_vec())),
        }
    }
    best.map(|(_, x)| x)
}
