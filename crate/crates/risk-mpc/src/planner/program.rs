//! Assembly of one SQP iteration's quadratic program: contouring costs
//! quadraticized about the linearization trajectory, dynamics linearized
//! stage by stage, box bounds, and one half-space row per retained
//! scenario with a shared per-stage L1 slack.

use nalgebra::{SMatrix, SVector};

use crate::dynamics::{self, NU, NX};
use crate::obstacles::ScenarioSet;
use crate::path::ReferencePath;
use crate::planner::linearize::{linearize_constraint, offset_for, HalfSpace};
use crate::planner::prune::RetainedScenarios;
use crate::planner::PlannerConfig;
use crate::qp::{LinearConstraints, QpError, QpProblem};
use crate::types::{disc_centers, ControlInput, RobotState};
use crate::Vec2;

/// Variable layout: stage blocks [x(5), u(3), σ(1)] with no input at the
/// terminal stage and no slack at stage 0.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub horizon: usize,
}

impl Layout {
    pub fn num_vars(&self) -> usize {
        // 8 + 9(N−1) + 6
        9 * self.horizon + 5
    }

    fn block(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            8 + 9 * (k - 1)
        }
    }

    pub fn state(&self, k: usize, comp: usize) -> usize {
        self.block(k) + comp
    }

    pub fn input(&self, k: usize, comp: usize) -> usize {
        debug_assert!(k < self.horizon);
        self.block(k) + NX + comp
    }

    pub fn slack(&self, k: usize) -> usize {
        debug_assert!((1..=self.horizon).contains(&k));
        if k == self.horizon {
            self.block(k) + NX
        } else {
            self.block(k) + NX + NU
        }
    }
}

/// One assembled QP plus the metadata to read the solution back.
pub struct ScenarioProgram {
    pub problem: QpProblem,
    pub layout: Layout,
    /// Half-space per inequality row, aligned with the row order.
    pub halfspaces: Vec<HalfSpace>,
}

impl ScenarioProgram {
    pub fn extract(&self, primal: &[f64]) -> (Vec<RobotState>, Vec<ControlInput>, Vec<f64>) {
        let n = self.layout.horizon;
        let states = (0..=n)
            .map(|k| {
                RobotState::new(
                    primal[self.layout.state(k, 0)],
                    primal[self.layout.state(k, 1)],
                    primal[self.layout.state(k, 2)],
                    primal[self.layout.state(k, 3)],
                    primal[self.layout.state(k, 4)],
                )
            })
            .collect();
        let inputs = (0..n)
            .map(|k| {
                ControlInput::new(
                    primal[self.layout.input(k, 0)],
                    primal[self.layout.input(k, 1)],
                    primal[self.layout.input(k, 2)],
                )
            })
            .collect();
        let slacks = (1..=n).map(|k| primal[self.layout.slack(k)]).collect();
        (states, inputs, slacks)
    }
}

/// Builds the QP about `(xhat, uhat)`. `fallback_normals` supplies the
/// substitute direction per (stage, disc, obstacle) when a scenario point
/// coincides with the linearization point; entries are refreshed with the
/// nearest retained scenario's normal for the next cycle.
#[allow(clippy::too_many_arguments)]
pub fn build_scenario_program(
    current: &RobotState,
    path: &ReferencePath,
    scenarios: &ScenarioSet,
    retained: &RetainedScenarios,
    xhat: &[RobotState],
    uhat: &[ControlInput],
    radii: &[f64],
    config: &PlannerConfig,
    fallback_normals: &mut [Option<Vec2>],
) -> Result<ScenarioProgram, QpError> {
    let n = config.horizon;
    let layout = Layout { horizon: n };
    let nv = layout.num_vars();
    let num_discs = config.footprint.num_discs();
    let num_obstacles = scenarios.num_obstacles;

    let mut hess: Vec<(usize, usize, f64)> = Vec::with_capacity(nv * 3);
    let mut grad = vec![0.0; nv];
    let mut lower = vec![f64::NEG_INFINITY; nv];
    let mut upper = vec![f64::INFINITY; nv];

    // Tracking cost, quadraticized about xhat.
    let w = &config.weights;
    for k in 0..=n {
        let sx = layout.state(k, 0);
        let sy = layout.state(k, 1);
        let sv = layout.state(k, 3);
        let ss = layout.state(k, 4);
        let ref_pt = path.eval_full(xhat[k].s);
        let (sin_t, cos_t) = ref_pt.tangent_angle.sin_cos();
        let dx = xhat[k].x - ref_pt.position.x;
        let dy = xhat[k].y - ref_pt.position.y;
        let e_contour = -sin_t * dx + cos_t * dy;
        let e_lag = cos_t * dx + sin_t * dy;
        // Rows of ∂(e_c, e_l)/∂(x, y, s); the s column carries the frame
        // rotation at rate κ plus the unit progress of the reference point.
        let kappa = ref_pt.curvature;
        let jc = [-sin_t, cos_t, -kappa * e_lag];
        let jl = [cos_t, sin_t, kappa * e_contour - 1.0];
        let idx = [sx, sy, ss];
        let zhat = [xhat[k].x, xhat[k].y, xhat[k].s];
        for i in 0..3 {
            for j in 0..=i {
                let hij = 2.0 * (w.contour * jc[i] * jc[j] + w.lag * jl[i] * jl[j]);
                if hij != 0.0 {
                    hess.push((idx[i], idx[j], hij));
                }
            }
            // q = 2 Jᵀ W e0 − H ẑ  (with H = 2 JᵀWJ).
            let mut g = 2.0 * (w.contour * jc[i] * e_contour + w.lag * jl[i] * e_lag);
            for j in 0..3 {
                g -= 2.0 * (w.contour * jc[i] * jc[j] + w.lag * jl[i] * jl[j]) * zhat[j];
            }
            grad[idx[i]] += g;
        }
        hess.push((sv, sv, 2.0 * w.velocity));
        grad[sv] += -2.0 * w.velocity * config.v_ref;
    }
    for k in 0..n {
        let ia = layout.input(k, 0);
        let iw = layout.input(k, 1);
        let ivs = layout.input(k, 2);
        hess.push((ia, ia, 2.0 * w.accel));
        hess.push((iw, iw, 2.0 * w.omega));
        hess.push((ivs, ivs, 2.0 * w.progress));
        grad[ivs] += -2.0 * w.progress * config.v_ref;
        lower[ia] = config.input_bounds.accel.0;
        upper[ia] = config.input_bounds.accel.1;
        lower[iw] = config.input_bounds.omega.0;
        upper[iw] = config.input_bounds.omega.1;
        lower[ivs] = config.input_bounds.progress.0;
        upper[ivs] = config.input_bounds.progress.1;
    }
    for k in 1..=n {
        let sk = layout.slack(k);
        grad[sk] += config.slack_penalty;
        lower[sk] = 0.0;
        // State boxes; stage 0 is pinned by the initial-state equality and
        // stays free so a slightly out-of-range measurement cannot make
        // the program infeasible.
        lower[layout.state(k, 3)] = config.state_bounds.v.0;
        upper[layout.state(k, 3)] = config.state_bounds.v.1;
        lower[layout.state(k, 4)] = 0.0;
        upper[layout.state(k, 4)] = path.total_length();
    }

    // Dynamics equalities: x_0 = current; x_{k+1} − A x_k − B u_k = c.
    let mut eq = LinearConstraints::default();
    let z0 = current.to_vector();
    for i in 0..NX {
        eq.push(vec![(layout.state(0, i), 1.0)], z0[i]);
    }
    for k in 0..n {
        let (a, b, c): (SMatrix<f64, NX, NX>, SMatrix<f64, NX, NU>, SVector<f64, NX>) =
            dynamics::linearize(&xhat[k], &uhat[k], config.dt, config.integration_substeps);
        for i in 0..NX {
            let mut row = Vec::with_capacity(NX + NU + 1);
            row.push((layout.state(k + 1, i), 1.0));
            for j in 0..NX {
                if a[(i, j)] != 0.0 {
                    row.push((layout.state(k, j), -a[(i, j)]));
                }
            }
            for j in 0..NU {
                if b[(i, j)] != 0.0 {
                    row.push((layout.input(k, j), -b[(i, j)]));
                }
            }
            eq.push(row, c[i]);
        }
    }

    // Scenario half-spaces on the linearized disc positions.
    let mut ineq = LinearConstraints::default();
    let mut halfspaces = Vec::with_capacity(retained.total_rows());
    for k in 1..=n {
        let centers = disc_centers(&xhat[k], &config.footprint);
        let (sin_psi, cos_psi) = xhat[k].psi.sin_cos();
        let psi_hat = xhat[k].psi;
        for (d, center) in centers.iter().enumerate() {
            let off = config.footprint.disc_offsets[d];
            for v in 0..num_obstacles {
                let r = config.footprint.disc_radius + radii[v];
                let fallback_idx = ((k - 1) * num_discs + d) * num_obstacles + v;
                let kept = retained.retained(k, d, v);
                for (rank, &scenario) in kept.iter().enumerate() {
                    let delta = scenarios.point(scenario, v, k);
                    let (normal, offset) = match linearize_constraint(delta, *center, r) {
                        Ok(pair) => pair,
                        Err(_) => {
                            let normal = fallback_normals[fallback_idx].unwrap_or_else(|| {
                                let t = path.eval_full(xhat[k].s).tangent_angle;
                                Vec2::new(-t.sin(), t.cos())
                            });
                            (normal, offset_for(normal, delta, r))
                        }
                    };
                    if rank == 0 {
                        fallback_normals[fallback_idx] = Some(normal);
                    }
                    // normal·p_d(x, y, ψ) ≤ offset + σ_k with the disc map
                    // linearized in ψ about ψ̂.
                    let g = off * (normal.x * cos_psi + normal.y * sin_psi);
                    let dg = off * (-normal.x * sin_psi + normal.y * cos_psi);
                    ineq.push(
                        vec![
                            (layout.state(k, 0), normal.x),
                            (layout.state(k, 1), normal.y),
                            (layout.state(k, 2), dg),
                            (layout.slack(k), -1.0),
                        ],
                        offset - g + dg * psi_hat,
                    );
                    halfspaces.push(HalfSpace {
                        normal,
                        offset,
                        stage: k,
                        disc: d,
                        obstacle: v,
                        scenario,
                    });
                }
            }
        }
    }

    let problem = QpProblem::new(nv, &hess, grad, eq, ineq, lower, upper)?;
    Ok(ScenarioProgram {
        problem,
        layout,
        halfspaces,
    })
}
