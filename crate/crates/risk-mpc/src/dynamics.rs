//! Second-order unicycle model with the contouring progress state.
//!
//! The discrete map over one planning stage is a fixed number of forward
//! Euler substeps under zero-order-hold inputs. The simulator advances the
//! world with the same substep, so one planner stage is exactly `substeps`
//! simulator ticks and plans re-integrate without model mismatch.

use nalgebra::{SMatrix, SVector};

use crate::types::{ControlInput, RobotState};

pub const NX: usize = 5;
pub const NU: usize = 3;

/// Substeps per planning stage; 0.2 s stages advance in 50 ms ticks.
pub const DEFAULT_SUBSTEPS: usize = 4;

fn euler(z: &SVector<f64, NX>, u: &SVector<f64, NU>, h: f64) -> SVector<f64, NX> {
    let (sin, cos) = z[2].sin_cos();
    SVector::<f64, NX>::new(
        z[0] + h * z[3] * cos,
        z[1] + h * z[3] * sin,
        z[2] + h * u[1],
        z[3] + h * u[0],
        z[4] + h * u[2],
    )
}

/// One planning stage of the discrete dynamics.
pub fn step(state: &RobotState, input: &ControlInput, dt: f64, substeps: usize) -> RobotState {
    let h = dt / substeps as f64;
    let u = input.to_vector();
    let mut z = state.to_vector();
    for _ in 0..substeps {
        z = euler(&z, &u, h);
    }
    RobotState::from_vector(&z)
}

/// Affine model `x' ≈ A x + B u + c` of [`step`] about a nominal pair,
/// chained through the Euler substeps.
pub fn linearize(
    state: &RobotState,
    input: &ControlInput,
    dt: f64,
    substeps: usize,
) -> (SMatrix<f64, NX, NX>, SMatrix<f64, NX, NU>, SVector<f64, NX>) {
    let h = dt / substeps as f64;
    let u = input.to_vector();
    let mut z = state.to_vector();
    let mut a = SMatrix::<f64, NX, NX>::identity();
    let mut b = SMatrix::<f64, NX, NU>::zeros();
    for _ in 0..substeps {
        let (sin, cos) = z[2].sin_cos();
        let mut ja = SMatrix::<f64, NX, NX>::identity();
        ja[(0, 2)] = -h * z[3] * sin;
        ja[(0, 3)] = h * cos;
        ja[(1, 2)] = h * z[3] * cos;
        ja[(1, 3)] = h * sin;
        let mut jb = SMatrix::<f64, NX, NU>::zeros();
        jb[(2, 1)] = h;
        jb[(3, 0)] = h;
        jb[(4, 2)] = h;
        b = ja * b + jb;
        a = ja * a;
        z = euler(&z, &u, h);
    }
    let c = z - a * state.to_vector() - b * u;
    (a, b, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line_motion() {
        let s0 = RobotState::new(0.0, 0.0, 0.0, 1.0, 0.0);
        let s1 = step(&s0, &ControlInput::new(0.0, 0.0, 1.0), 0.2, 4);
        assert!((s1.x - 0.2).abs() < 1e-12);
        assert!(s1.y.abs() < 1e-12);
        assert!((s1.s - 0.2).abs() < 1e-12);
        assert!((s1.v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn acceleration_integrates() {
        let s0 = RobotState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let s1 = step(&s0, &ControlInput::new(1.0, 0.0, 0.0), 0.2, 4);
        assert!((s1.v - 0.2).abs() < 1e-12);
        // Euler substeps: x advances on v of the previous substep.
        assert!(s1.x > 0.0 && s1.x < 0.2 * 0.2);
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let s0 = RobotState::new(0.3, -0.2, 0.7, 1.4, 2.0);
        let u0 = ControlInput::new(0.5, -0.4, 1.2);
        let (a, b, c) = linearize(&s0, &u0, 0.2, 4);
        // Exactness at the nominal point.
        let nominal = step(&s0, &u0, 0.2, 4).to_vector();
        let model = a * s0.to_vector() + b * u0.to_vector() + c;
        assert!((nominal - model).norm() < 1e-12);
        // Finite-difference Jacobian columns.
        let eps = 1e-6;
        for j in 0..NX {
            let mut zp = s0.to_vector();
            zp[j] += eps;
            let sp = RobotState {
                x: zp[0],
                y: zp[1],
                psi: zp[2],
                v: zp[3],
                s: zp[4],
            };
            let fd = (step(&sp, &u0, 0.2, 4).to_vector() - nominal) / eps;
            assert!((fd - a.column(j)).norm() < 1e-5, "state column {j}");
        }
        for j in 0..NU {
            let mut up = u0.to_vector();
            up[j] += eps;
            let upx = ControlInput::new(up[0], up[1], up[2]);
            let fd = (step(&s0, &upx, 0.2, 4).to_vector() - nominal) / eps;
            assert!((fd - b.column(j)).norm() < 1e-5, "input column {j}");
        }
    }

    #[test]
    fn substep_composition_matches_full_step() {
        let s0 = RobotState::new(0.0, 0.0, 0.4, 1.5, 0.0);
        let u = ControlInput::new(0.3, 0.8, 1.5);
        let full = step(&s0, &u, 0.2, 4);
        let mut part = s0;
        for _ in 0..4 {
            part = step(&part, &u, 0.05, 1);
        }
        assert!((full.to_vector() - part.to_vector()).norm() < 1e-12);
    }
}
