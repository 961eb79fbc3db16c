//! Risk-aware scenario MPC for a mobile robot among pedestrians.
//!
//! The stack runs several scenario-based contouring MPC planners in parallel,
//! each with a different acceptable risk bound ε. After every planning cycle
//! the posterior collision probability ζ of each plan is estimated by
//! Monte-Carlo integration of the pedestrians' Gaussian-mixture predictions
//! over the robot's swept discs, and the least conservative plan with
//! ζ below a fixed threshold ε∘ is deployed; if none qualifies the robot
//! brakes. A closed-loop simulator reproduces pedestrian-crossing
//! experiments at desk scale and emits per-run metrics and traces.
//!
//! Module map:
//! - [`types`], [`path`], [`dynamics`]: shared vocabulary (states, inputs,
//!   footprint, plans, reference path, unicycle model).
//! - [`obstacles`]: pedestrian ground-truth dynamics, per-stage mixture
//!   predictions, density evaluation, scenario sampling.
//! - [`qp`]: internal convex QP solver (operator splitting + polish).
//! - [`planner`]: one scenario MPC instance (sample-size bound, constraint
//!   linearization, pruning, SQP loop).
//! - [`risk`]: posterior collision-probability assessment of a plan.
//! - [`supervisor`]: the risk-gated controller switch.
//! - [`sim`]: closed-loop episodes, batches, metrics, traces.

pub mod dynamics;
pub mod obstacles;
pub mod path;
pub mod planner;
pub mod qp;
pub mod risk;
pub mod seeds;
pub mod sim;
pub mod supervisor;
pub mod types;

pub use types::{ControlInput, Footprint, Plan, PlanStatus, RobotState};

/// 2D point / vector in world coordinates (meters).
pub type Vec2 = nalgebra::Vector2<f64>;
/// 2x2 covariance or rotation block.
pub type Mat2 = nalgebra::Matrix2<f64>;
