//! Shared domain vocabulary: robot state, inputs, footprint, plans.

use serde::{Deserialize, Serialize};

use crate::Vec2;

/// Wraps an angle to the half-open interval (−π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = theta % two_pi;
    if t <= -std::f64::consts::PI {
        t += two_pi;
    } else if t > std::f64::consts::PI {
        t -= two_pi;
    }
    t
}

/// Robot state: planar pose, forward speed, and the contouring progress
/// variable `s` (arc length along the reference path).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading, kept in (−π, π].
    pub psi: f64,
    /// Forward speed (m/s).
    pub v: f64,
    /// Path progress (m).
    pub s: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, psi: f64, v: f64, s: f64) -> Self {
        Self {
            x,
            y,
            psi: normalize_angle(psi),
            v,
            s,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub(crate) fn to_vector(self) -> nalgebra::SVector<f64, 5> {
        nalgebra::SVector::<f64, 5>::new(self.x, self.y, self.psi, self.v, self.s)
    }

    pub(crate) fn from_vector(z: &nalgebra::SVector<f64, 5>) -> Self {
        Self::new(z[0], z[1], z[2], z[3], z[4])
    }
}

/// Control input: forward acceleration, yaw rate, and the virtual progress
/// rate driving `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Forward acceleration (m/s²).
    pub a: f64,
    /// Angular velocity (rad/s).
    pub omega: f64,
    /// Progress rate (m/s).
    pub vs: f64,
}

impl ControlInput {
    pub fn new(a: f64, omega: f64, vs: f64) -> Self {
        Self { a, omega, vs }
    }

    pub const ZERO: ControlInput = ControlInput {
        a: 0.0,
        omega: 0.0,
        vs: 0.0,
    };

    pub(crate) fn to_vector(self) -> nalgebra::SVector<f64, 3> {
        nalgebra::SVector::<f64, 3>::new(self.a, self.omega, self.vs)
    }

    pub(crate) fn from_vector(z: &nalgebra::SVector<f64, 3>) -> Self {
        Self::new(z[0], z[1], z[2])
    }
}

/// Robot footprint as a union of discs placed along the body axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    /// Longitudinal offsets of each disc center from the robot center (m).
    pub disc_offsets: Vec<f64>,
    /// Common disc radius r_c (m).
    pub disc_radius: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum TypeError {
    #[error("footprint needs at least one disc")]
    EmptyFootprint,
    #[error("disc radius must be positive, got {0}")]
    NonPositiveRadius(f64),
}

impl Footprint {
    pub fn new(disc_offsets: Vec<f64>, disc_radius: f64) -> Result<Self, TypeError> {
        if disc_offsets.is_empty() {
            return Err(TypeError::EmptyFootprint);
        }
        if disc_radius <= 0.0 {
            return Err(TypeError::NonPositiveRadius(disc_radius));
        }
        Ok(Self {
            disc_offsets,
            disc_radius,
        })
    }

    pub fn num_discs(&self) -> usize {
        self.disc_offsets.len()
    }
}

/// World positions of the footprint discs at a given state.
///
/// Disc `i` sits at the robot center translated by `disc_offsets[i]` along
/// the heading.
pub fn disc_centers(state: &RobotState, footprint: &Footprint) -> Vec<Vec2> {
    let (sin, cos) = state.psi.sin_cos();
    footprint
        .disc_offsets
        .iter()
        .map(|off| Vec2::new(state.x + off * cos, state.y + off * sin))
        .collect()
}

/// Outcome of one planner solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanStatus {
    Solved,
    Infeasible,
    MaxIterations,
}

/// A planned trajectory over the horizon plus the risk bound of the planner
/// that produced it.
///
/// `states` always holds one more entry than `inputs`; `states[k+1]` is the
/// nonlinear dynamics map applied to `(states[k], inputs[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub states: Vec<RobotState>,
    pub inputs: Vec<ControlInput>,
    pub status: PlanStatus,
    /// Acceptable per-stage risk of the producing planner.
    pub epsilon: f64,
}

impl Plan {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    /// Largest re-integration error against the discrete dynamics map, for
    /// consistency checks.
    pub fn dynamics_residual(&self, dt: f64, substeps: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.inputs.len() {
            let pred = crate::dynamics::step(&self.states[k], &self.inputs[k], dt, substeps);
            let d = (pred.to_vector() - self.states[k + 1].to_vector()).abs();
            worst = worst.max(d.max());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn angles_normalize_to_half_open_interval() {
        assert_eq!(normalize_angle(0.0), 0.0);
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-FRAC_PI_2) + FRAC_PI_2).abs() < 1e-15);
        let s = RobotState::new(0.0, 0.0, 2.5 * PI, 0.0, 0.0);
        assert!((s.psi - 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn disc_centers_zero_offset() {
        let fp = Footprint::new(vec![0.0], 0.3).unwrap();
        let c = disc_centers(&RobotState::new(0.0, 0.0, 0.0, 0.0, 0.0), &fp);
        assert_eq!(c, vec![Vec2::new(0.0, 0.0)]);
    }

    #[test]
    fn disc_centers_axis_aligned_translation() {
        let fp = Footprint::new(vec![-0.2, 0.2], 0.3).unwrap();
        let c = disc_centers(&RobotState::new(1.0, 2.0, 0.0, 0.0, 0.0), &fp);
        assert!((c[0] - Vec2::new(0.8, 2.0)).norm() < 1e-12);
        assert!((c[1] - Vec2::new(1.2, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn disc_centers_quarter_turn() {
        let fp = Footprint::new(vec![0.2], 0.3).unwrap();
        let c = disc_centers(&RobotState::new(0.0, 0.0, FRAC_PI_2, 0.0, 0.0), &fp);
        assert!((c[0] - Vec2::new(0.0, 0.2)).norm() < 1e-12);
    }

    #[test]
    fn footprint_rejects_bad_input() {
        assert!(Footprint::new(vec![], 0.3).is_err());
        assert!(Footprint::new(vec![0.0], 0.0).is_err());
    }
}
