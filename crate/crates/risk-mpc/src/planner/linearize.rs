//! Half-space linearization of one collision-avoidance constraint.

use crate::Vec2;

/// One linearized scenario constraint `normal·p ≤ offset` on a robot disc
/// position, tagged with where it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    /// Unit normal pointing from the disc toward the obstacle sample.
    pub normal: Vec2,
    /// Offset b = normalᵀ·δ − r.
    pub offset: f64,
    pub stage: usize,
    pub disc: usize,
    pub obstacle: usize,
    pub scenario: usize,
}

/// Coincident obstacle sample and linearization point; the caller picks a
/// substitute direction.
#[derive(Debug, thiserror::Error)]
#[error("obstacle sample coincides with the linearization point")]
pub struct DegenerateLinearization;

/// Separating half-space for an obstacle sample `delta` seen from the disc
/// linearization point `xhat` with combined radius `r`: the feasible side
/// `normal·p ≤ offset` excludes the open disc of radius `r` around `delta`
/// facing `xhat`.
pub fn linearize_constraint(
    delta: Vec2,
    xhat: Vec2,
    r: f64,
) -> Result<(Vec2, f64), DegenerateLinearization> {
    let diff = delta - xhat;
    let dist = diff.norm();
    if dist <= 1e-9 {
        return Err(DegenerateLinearization);
    }
    let normal = diff / dist;
    Ok((normal, normal.dot(&delta) - r))
}

/// Offset for a caller-chosen substitute normal (degenerate case).
pub fn offset_for(normal: Vec2, delta: Vec2, r: f64) -> f64 {
    normal.dot(&delta) - r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn axis_aligned_example() {
        let (a, b) = linearize_constraint(Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.0), 0.625).unwrap();
        assert!((a - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        assert!((b - 0.375).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_three_four_five() {
        let (a, b) = linearize_constraint(Vec2::new(3.0, 4.0), Vec2::new(0.0, 0.0), 0.625).unwrap();
        assert!((a - Vec2::new(0.6, 0.8)).norm() < 1e-12);
        assert!((b - 4.375).abs() < 1e-12);
    }

    #[test]
    fn xhat_inside_collision_disc_violates() {
        let (a, b) = linearize_constraint(Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.0), 1.5).unwrap();
        assert!((b - (-0.5)).abs() < 1e-12);
        assert!(a.dot(&Vec2::new(0.0, 0.0)) > b, "xhat must violate");
    }

    #[test]
    fn coincident_points_error() {
        assert!(linearize_constraint(Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0), 0.5).is_err());
    }

    proptest! {
        #[test]
        fn boundary_point_identity_and_feasibility(
            dx in -20.0f64..20.0,
            dy in -20.0f64..20.0,
            xx in -20.0f64..20.0,
            xy in -20.0f64..20.0,
            r in 0.05f64..3.0,
        ) {
            let delta = Vec2::new(dx, dy);
            let xhat = Vec2::new(xx, xy);
            prop_assume!((delta - xhat).norm() > 1e-6);
            let (a, b) = linearize_constraint(delta, xhat, r).unwrap();
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
            // The disc boundary point toward xhat sits exactly on the plane.
            let boundary = delta - a * r;
            prop_assert!((a.dot(&boundary) - b).abs() < 1e-9);
            // xhat is feasible iff it clears the combined radius.
            let feasible = a.dot(&xhat) <= b + 1e-12;
            prop_assert_eq!(feasible, (delta - xhat).norm() >= r - 1e-12);
        }
    }
}
