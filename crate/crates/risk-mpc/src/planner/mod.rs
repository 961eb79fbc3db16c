//! One scenario-based contouring MPC instance.
//!
//! Per cycle: draw the sample-size-bounded scenario set, prune it around
//! the linearization trajectory, assemble and solve the QP, and repeat for
//! a fixed SQP budget (real-time-iteration style). The returned plan is
//! the nonlinear re-integration of the optimized inputs, so its states
//! satisfy the discrete dynamics to machine precision regardless of how
//! far the SQP got.

mod linearize;
mod program;
mod prune;
mod sample_size;

pub use linearize::{linearize_constraint, offset_for, DegenerateLinearization, HalfSpace};
pub use program::{build_scenario_program, Layout, ScenarioProgram};
pub use prune::{prune_scenarios, RetainedScenarios};
pub use sample_size::{binomial_tail, required_sample_size, SampleSizeError};

pub use crate::obstacles::ScenarioSet;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::dynamics;
use crate::obstacles::{sample_scenarios, PerceptionFrame};
use crate::path::ReferencePath;
use crate::qp::{solve_qp_warm, QpSolution, QpStatus};
use crate::types::{ControlInput, Footprint, Plan, PlanStatus, RobotState};
use crate::Vec2;

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("invalid planner config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    SampleSize(#[from] SampleSizeError),
}

/// Bounds on the planned state (speed; progress is bounded by the path).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    /// (min, max) forward speed (m/s).
    pub v: (f64, f64),
}

impl Default for StateBounds {
    fn default() -> Self {
        Self { v: (0.0, 2.5) }
    }
}

/// Box bounds on the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub accel: (f64, f64),
    pub omega: (f64, f64),
    /// Progress rate; the lower bound must stay ≥ 0 so the progress
    /// variable never runs backward.
    pub progress: (f64, f64),
}

impl Default for InputBounds {
    fn default() -> Self {
        Self {
            accel: (-3.0, 3.0),
            omega: (-2.0, 2.0),
            progress: (0.0, 3.0),
        }
    }
}

/// Contouring cost weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub contour: f64,
    pub lag: f64,
    /// Forward-speed tracking toward `v_ref`.
    pub velocity: f64,
    pub accel: f64,
    pub omega: f64,
    /// Progress-rate tracking toward `v_ref`.
    pub progress: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            contour: 1.0,
            lag: 10.0,
            velocity: 0.5,
            accel: 0.1,
            omega: 0.1,
            progress: 0.1,
        }
    }
}

/// Full configuration of one scenario MPC instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Acceptable per-stage risk ε, uniform across stages.
    pub epsilon: f64,
    /// Confidence β of the sample-size bound.
    pub beta: f64,
    /// Assumed support-subsample bound; `None` uses n_x + #obstacles.
    pub support_bound: Option<usize>,
    pub horizon: usize,
    /// Planning step (s).
    pub dt: f64,
    /// Euler substeps per planning step.
    pub integration_substeps: usize,
    pub state_bounds: StateBounds,
    pub input_bounds: InputBounds,
    pub weights: CostWeights,
    /// Reference speed (m/s).
    pub v_ref: f64,
    pub sqp_iterations: usize,
    /// L1 penalty on the shared per-stage constraint slack.
    pub slack_penalty: f64,
    /// Scenario points kept per (stage, disc, obstacle).
    pub prune_keep: usize,
    pub footprint: Footprint,
    pub qp_tolerance: f64,
    pub qp_max_iter: usize,
    /// Replanning period (s); sets the warm-start time shift.
    pub control_period: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            beta: 0.01,
            support_bound: None,
            horizon: 20,
            dt: 0.2,
            integration_substeps: 4,
            state_bounds: StateBounds::default(),
            input_bounds: InputBounds::default(),
            weights: CostWeights::default(),
            v_ref: 2.0,
            sqp_iterations: 3,
            slack_penalty: 1e4,
            prune_keep: 6,
            footprint: Footprint {
                disc_offsets: vec![-0.15, 0.15],
                disc_radius: 0.325,
            },
            qp_tolerance: 1e-6,
            qp_max_iter: 2000,
            control_period: 0.05,
        }
    }
}

impl PlannerConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |msg: String| Err(PlannerError::BadConfig(msg));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon {}", self.epsilon));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta {}", self.beta));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.dt <= 0.0 || self.integration_substeps == 0 {
            return bad("dt and integration substeps must be positive".into());
        }
        let w = &self.weights;
        if [w.contour, w.lag, w.velocity, w.accel, w.omega, w.progress]
            .iter()
            .any(|v| *v < 0.0)
        {
            return bad("cost weights must be nonnegative".into());
        }
        if self.input_bounds.progress.0 < 0.0 {
            return bad("progress-rate lower bound must be nonnegative".into());
        }
        for (lo, hi) in [
            self.state_bounds.v,
            self.input_bounds.accel,
            self.input_bounds.omega,
            self.input_bounds.progress,
        ] {
            if lo > hi {
                return bad(format!("empty bound interval [{lo}, {hi}]"));
            }
        }
        if self.sqp_iterations == 0 || self.prune_keep == 0 {
            return bad("sqp_iterations and prune_keep must be at least 1".into());
        }
        if self.slack_penalty <= 0.0 {
            return bad("slack penalty must be positive".into());
        }
        Ok(())
    }

    fn support_for(&self, num_obstacles: usize) -> usize {
        self.support_bound.unwrap_or(dynamics::NX + num_obstacles)
    }
}

/// Support accounting of the final QP: active half-space rows per stage
/// and the number of distinct scenarios owning at least one active row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportInfo {
    /// Active scenario rows per stage 1..=N.
    pub active_per_stage: Vec<usize>,
    /// Distinct scenarios with an active row.
    pub s_hat: usize,
}

/// One scenario MPC worker owning its warm-start state and RNG stream.
pub struct ScenarioPlanner {
    config: PlannerConfig,
    path: ReferencePath,
    rng: ChaCha8Rng,
    warm_plan: Option<Plan>,
    warm_qp: Option<QpSolution>,
    fallback_normals: Vec<Option<Vec2>>,
    sample_size_cache: HashMap<usize, usize>,
}

impl ScenarioPlanner {
    pub fn new(
        config: PlannerConfig,
        path: ReferencePath,
        rng: ChaCha8Rng,
    ) -> Result<Self, PlannerError> {
        config.validate()?;
        Ok(Self {
            config,
            path,
            rng,
            warm_plan: None,
            warm_qp: None,
            fallback_normals: Vec::new(),
            sample_size_cache: HashMap::new(),
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon
    }

    /// Drops warm-start state; the next solve cold-starts from a braking
    /// rollout.
    pub fn reset_warm_start(&mut self) {
        self.warm_plan = None;
        self.warm_qp = None;
    }

    /// Scenario count for the configured ε, β and the support bound implied
    /// by the obstacle count.
    pub fn sample_size(&mut self, num_obstacles: usize) -> Result<usize, PlannerError> {
        let support = self.config.support_for(num_obstacles);
        if let Some(&s) = self.sample_size_cache.get(&support) {
            return Ok(s);
        }
        let s = required_sample_size(self.config.epsilon, self.config.beta, support)?;
        self.sample_size_cache.insert(support, s);
        Ok(s)
    }

    /// Solves one cycle. Never panics; solver trouble surfaces as plan
    /// status.
    pub fn solve(&mut self, current: &RobotState, frame: &PerceptionFrame) -> (Plan, SupportInfo) {
        let n = self.config.horizon;
        let empty_support = SupportInfo {
            active_per_stage: vec![0; n],
            s_hat: 0,
        };
        let num_obstacles = frame.num_obstacles();
        let sample_count = match self.sample_size(num_obstacles) {
            Ok(s) => s,
            Err(_) => {
                return (
                    self.failed_plan(current, PlanStatus::Infeasible),
                    empty_support,
                );
            }
        };
        if frame.predictions.iter().any(|p| p.horizon() < n) {
            return (
                self.failed_plan(current, PlanStatus::Infeasible),
                empty_support,
            );
        }

        let scenarios = sample_scenarios(
            &frame.states,
            &frame.motion,
            n,
            sample_count,
            &mut self.rng,
        );
        let radii: Vec<f64> = frame.predictions.iter().map(|p| p.radius).collect();

        let normals_len = n * self.config.footprint.num_discs() * num_obstacles;
        if self.fallback_normals.len() != normals_len {
            self.fallback_normals = vec![None; normals_len];
        }

        let (mut xhat, mut uhat) = self.initial_guess(current);
        let mut final_qp: Option<(QpSolution, ScenarioProgram)> = None;
        for sqp_iter in 0..self.config.sqp_iterations {
            let retained = prune_scenarios(
                &scenarios,
                &xhat,
                &self.config.footprint,
                self.config.prune_keep,
            );
            let program = match build_scenario_program(
                current,
                &self.path,
                &scenarios,
                &retained,
                &xhat,
                &uhat,
                &radii,
                &self.config,
                &mut self.fallback_normals,
            ) {
                Ok(p) => p,
                Err(_) => {
                    self.reset_warm_start();
                    return (
                        self.failed_plan(current, PlanStatus::Infeasible),
                        empty_support,
                    );
                }
            };
            let warm = self
                .warm_qp
                .as_ref()
                .filter(|w| w.primal.len() == program.layout.num_vars());
            let solution = solve_qp_warm(
                &program.problem,
                self.config.qp_tolerance,
                self.config.qp_max_iter,
                warm,
            );
            match solution.status {
                QpStatus::Optimal => {}
                QpStatus::PrimalInfeasible => {
                    self.reset_warm_start();
                    return (
                        self.failed_plan(current, PlanStatus::Infeasible),
                        empty_support,
                    );
                }
                QpStatus::MaxIter => {
                    self.reset_warm_start();
                    return (
                        self.failed_plan(current, PlanStatus::MaxIterations),
                        empty_support,
                    );
                }
            }
            let (states, inputs, _slacks) = program.extract(&solution.primal);
            let step = step_norm(&xhat, &uhat, &states, &inputs);
            xhat = states;
            uhat = inputs;
            self.warm_qp = Some(solution.clone());
            final_qp = Some((solution, program));
            if step < 1e-4 {
                break;
            }
        }

        let (solution, program) = final_qp.expect("at least one SQP iteration ran");
        let (_, _, slacks) = program.extract(&solution.primal);
        let max_slack = slacks.iter().fold(0.0f64, |m, s| m.max(*s));

        // Re-integrate the nonlinear dynamics under the optimized inputs so
        // the plan is dynamics-consistent to integration tolerance.
        let mut states = Vec::with_capacity(n + 1);
        states.push(*current);
        for k in 0..n {
            states.push(dynamics::step(
                &states[k],
                &uhat[k],
                self.config.dt,
                self.config.integration_substeps,
            ));
        }
        let status = if max_slack < 1e-6 {
            PlanStatus::Solved
        } else {
            PlanStatus::Infeasible
        };
        let plan = Plan {
            states,
            inputs: uhat,
            status,
            epsilon: self.config.epsilon,
        };

        // Support accounting over the retained rows of the final program.
        let mut active_per_stage = vec![0usize; n];
        let mut scenario_hit = vec![false; sample_count];
        let ineq = program.problem.ineq_constraints();
        for (row_idx, hs) in program.halfspaces.iter().enumerate() {
            let lhs: f64 = ineq.rows[row_idx]
                .iter()
                .map(|&(c, v)| v * solution.primal[c])
                .sum();
            if (lhs - ineq.rhs[row_idx]).abs() < 1e-6 {
                active_per_stage[hs.stage - 1] += 1;
                scenario_hit[hs.scenario] = true;
            }
        }
        let support = SupportInfo {
            active_per_stage,
            s_hat: scenario_hit.iter().filter(|h| **h).count(),
        };

        self.warm_plan = Some(plan.clone());
        (plan, support)
    }

    /// Plan returned when the solve cannot produce a deployable
    /// trajectory: a braking rollout carrying the failure status.
    fn failed_plan(&self, current: &RobotState, status: PlanStatus) -> Plan {
        let (states, inputs) = self.braking_rollout(current);
        Plan {
            states,
            inputs,
            status,
            epsilon: self.config.epsilon,
        }
    }

    fn initial_guess(&self, current: &RobotState) -> (Vec<RobotState>, Vec<ControlInput>) {
        match &self.warm_plan {
            Some(prev) => self.shifted_guess(current, prev),
            None => self.braking_rollout(current),
        }
    }

    /// Constant-deceleration rollout: always-defined linearization point.
    fn braking_rollout(&self, current: &RobotState) -> (Vec<RobotState>, Vec<ControlInput>) {
        let n = self.config.horizon;
        let dt = self.config.dt;
        let mut states = Vec::with_capacity(n + 1);
        states.push(*current);
        let mut inputs = Vec::with_capacity(n);
        for k in 0..n {
            let v = states[k].v;
            let a = (-v / dt).max(self.config.input_bounds.accel.0);
            let vs = v.clamp(
                self.config.input_bounds.progress.0,
                self.config.input_bounds.progress.1,
            );
            let u = ControlInput::new(a, 0.0, vs);
            states.push(dynamics::step(
                &states[k],
                &u,
                dt,
                self.config.integration_substeps,
            ));
            inputs.push(u);
        }
        (states, inputs)
    }

    /// Previous plan advanced by the replanning period, re-anchored at the
    /// measured state.
    fn shifted_guess(
        &self,
        current: &RobotState,
        prev: &Plan,
    ) -> (Vec<RobotState>, Vec<ControlInput>) {
        let n = self.config.horizon;
        let dt = self.config.dt;
        let shift = self.config.control_period;
        let mut states = Vec::with_capacity(n + 1);
        states.push(*current);
        for k in 1..=n {
            states.push(interp_state(prev, k as f64 * dt + shift, dt));
        }
        let inputs = (0..n)
            .map(|k| input_at(prev, k as f64 * dt + shift, dt))
            .collect();
        (states, inputs)
    }
}

fn step_norm(
    xa: &[RobotState],
    ua: &[ControlInput],
    xb: &[RobotState],
    ub: &[ControlInput],
) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, b) in xa.iter().zip(xb) {
        worst = worst.max((a.to_vector() - b.to_vector()).abs().max());
    }
    for (a, b) in ua.iter().zip(ub) {
        worst = worst.max((a.to_vector() - b.to_vector()).abs().max());
    }
    worst
}

fn interp_state(plan: &Plan, t: f64, dt: f64) -> RobotState {
    let n = plan.inputs.len();
    let idx = (t / dt).floor() as usize;
    if idx >= n {
        return *plan.states.last().expect("plan has states");
    }
    let frac = (t - idx as f64 * dt) / dt;
    let a = &plan.states[idx];
    let b = &plan.states[idx + 1];
    let dpsi = crate::types::normalize_angle(b.psi - a.psi);
    RobotState::new(
        a.x + frac * (b.x - a.x),
        a.y + frac * (b.y - a.y),
        a.psi + frac * dpsi,
        a.v + frac * (b.v - a.v),
        a.s + frac * (b.s - a.s),
    )
}

fn input_at(plan: &Plan, t: f64, dt: f64) -> ControlInput {
    let n = plan.inputs.len();
    let idx = ((t / dt).floor() as usize).min(n.saturating_sub(1));
    plan.inputs[idx]
}

// temporary scratch: debug planner QP convergence
mod scratch { use crate::obstacles::{MarkovPhase, ModelKind, MotionModelConfig, PedestrianSimState, PerceptionFrame, sample_scenarios};
use crate::path::{ReferencePath, Waypoint};
use crate::planner::*;
use crate::qp::*;
use crate::seeds;
use crate::types::RobotState;
use crate::{Mat2, Vec2};

#[test]
#[ignore]
fn debug_qp_scratch() {
    let cfg = PlannerConfig::with_epsilon(0.1);
    let path = ReferencePath::from_waypoints(vec![
        Waypoint::new(0.0, 0.0, 0.0),
        Waypoint::new(20.0, 0.0, 0.0),
        Waypoint::new(40.0, 0.0, 0.0),
    ]).unwrap();
    let peds = vec![PedestrianSimState {
        position: Vec2::new(8.0, 0.0),
        nominal_velocity: Vec2::new(0.0, 0.0),
        markov_state: MarkovPhase::Horizontal,
        rng_stream_id: 0,
    }];
    let motion = MotionModelConfig { sigma_w: Mat2::zeros(), p_stay: 0.975, dt: 0.2, model_kind: ModelKind::Unimodal };
    let frame = PerceptionFrame::new(peds, motion, &[0.3], cfg.horizon).unwrap();
    let current = RobotState::new(5.0, 0.0, 0.0, 2.0, 5.0);

    let mut rng = seeds::stream(13, "one", 0);
    let s = required_sample_size(cfg.epsilon, cfg.beta, 5 + 1).unwrap();
    eprintln!("sample size = {s}");
    let scen = sample_scenarios(&frame.states, &frame.motion, cfg.horizon, s, &mut rng);

    // braking rollout as xhat
    let mut xhat = vec![current];
    let mut uhat = vec![];
    for k in 0..cfg.horizon {
        let v: f64 = xhat[k].v;
        let a = (-v / cfg.dt).max(cfg.input_bounds.accel.0);
        let u = crate::types::ControlInput::new(a, 0.0, v.clamp(0.0, 3.0));
        xhat.push(crate::dynamics::step(&xhat[k], &u, cfg.dt, 4));
        uhat.push(u);
    }
    let retained = prune_scenarios(&scen, &xhat, &cfg.footprint, cfg.prune_keep);
    let mut fallback = vec![None; cfg.horizon * 2 * 1];
    let program = build_scenario_program(&current, &path, &scen, &retained, &xhat, &uhat, &[0.3], &cfg, &mut fallback).unwrap();
    eprintln!("n={} eq={} ineq={}", program.problem.num_vars(), program.problem.num_eq(), program.problem.num_ineq());
    for max_iter in [200usize, 1000, 4000, 20000] {
        let t0 = std::time::Instant::now();
        let sol = solve_qp(&program.problem, 1e-6, max_iter);
        eprintln!("max_iter={max_iter}: status={:?} iters={} kkt={:.3e} elapsed={:?}", sol.status, sol.iterations, sol.kkt_residual, t0.elapsed());
    }
}
}
