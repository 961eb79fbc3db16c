//! Reference path: waypoints joined by a C² cubic spline, re-parameterized
//! by arc length so the contouring progress variable is in meters.

use serde::{Deserialize, Serialize};

use crate::Vec2;

#[derive(Debug, thiserror::Error)]
pub enum PathError {
    #[error("reference path needs at least two waypoints")]
    TooFewWaypoints,
    #[error("consecutive waypoints {0} and {1} coincide")]
    DuplicateWaypoint(usize, usize),
}

/// A pose the path must pass through. The heading is carried along for
/// consumers (spawn specs, goal checks); the spline interpolates positions
/// only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Natural cubic spline through scalar samples at given knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots (natural: zero at both ends).
    second: Vec<f64>,
}

impl CubicSpline {
    fn fit(knots: &[f64], values: &[f64]) -> Self {
        let n = knots.len();
        let mut second = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second-derivative system.
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                let h0 = knots[i + 1] - knots[i];
                let h1 = knots[i + 2] - knots[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0
                    * ((values[i + 2] - values[i + 1]) / h1 - (values[i + 1] - values[i]) / h0);
            }
            for i in 1..m {
                let h0 = knots[i + 1] - knots[i];
                let w = h0 / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                second[i + 1] = (rhs[i] - upper[i] * second[i + 2]) / diag[i];
            }
        }
        Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            second,
        }
    }

    fn segment(&self, u: f64) -> usize {
        match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&u).expect("finite knot"))
        {
            Ok(i) => i.min(self.knots.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.knots.len() - 2),
        }
    }

    fn eval(&self, u: f64) -> f64 {
        let i = self.segment(u);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - u) / h;
        let b = (u - self.knots[i]) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }

    fn deriv(&self, u: f64) -> f64 {
        let i = self.segment(u);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - u) / h;
        let b = (u - self.knots[i]) / h;
        (self.values[i + 1] - self.values[i]) / h
            + ((1.0 - 3.0 * a * a) * self.second[i] + (3.0 * b * b - 1.0) * self.second[i + 1]) * h
                / 6.0
    }

    fn second_deriv(&self, u: f64) -> f64 {
        let i = self.segment(u);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - u) / h;
        let b = (u - self.knots[i]) / h;
        a * self.second[i] + b * self.second[i + 1]
    }
}

/// Point, tangent, and curvature at an arc length along the path.
#[derive(Debug, Clone, Copy)]
pub struct PathPoint {
    pub position: Vec2,
    /// Tangent angle of the unit direction vector.
    pub tangent_angle: f64,
    /// Signed curvature dθ/ds.
    pub curvature: f64,
}

/// Spline reference path parameterized by arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePath {
    waypoints: Vec<Waypoint>,
    /// Cumulative arc length at each waypoint (m), strictly increasing.
    arclength_param: Vec<f64>,
    spline_x: CubicSpline,
    spline_y: CubicSpline,
    /// Dense arc-length samples for inverting s -> spline parameter.
    table_u: Vec<f64>,
    table_s: Vec<f64>,
}

/// Subdivision per spline segment when tabulating arc length.
const ARC_SUBDIV: usize = 24;

/// 5-point Gauss-Legendre nodes/weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

impl ReferencePath {
    pub fn from_waypoints(waypoints: Vec<Waypoint>) -> Result<Self, PathError> {
        if waypoints.len() < 2 {
            return Err(PathError::TooFewWaypoints);
        }
        // Chord-length knots for the interpolating spline.
        let mut knots = Vec::with_capacity(waypoints.len());
        knots.push(0.0);
        for i in 1..waypoints.len() {
            let chord = (waypoints[i].position() - waypoints[i - 1].position()).norm();
            if chord < 1e-9 {
                return Err(PathError::DuplicateWaypoint(i - 1, i));
            }
            knots.push(knots[i - 1] + chord);
        }
        let xs: Vec<f64> = waypoints.iter().map(|w| w.x).collect();
        let ys: Vec<f64> = waypoints.iter().map(|w| w.y).collect();
        let spline_x = CubicSpline::fit(&knots, &xs);
        let spline_y = CubicSpline::fit(&knots, &ys);

        // Tabulate arc length on a fine grid, one Gauss rule per cell.
        let speed = |u: f64| -> f64 {
            let dx = spline_x.deriv(u);
            let dy = spline_y.deriv(u);
            dx.hypot(dy)
        };
        let mut table_u = vec![0.0];
        let mut table_s = vec![0.0];
        let mut arclength_param = vec![0.0];
        let mut acc = 0.0;
        for seg in 0..knots.len() - 1 {
            let (u0, u1) = (knots[seg], knots[seg + 1]);
            let h = (u1 - u0) / ARC_SUBDIV as f64;
            for cell in 0..ARC_SUBDIV {
                let a = u0 + cell as f64 * h;
                let mid = a + 0.5 * h;
                let half = 0.5 * h;
                let mut cell_len = 0.0;
                for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
                    cell_len += weight * speed(mid + half * node);
                }
                acc += cell_len * half;
                table_u.push(a + h);
                table_s.push(acc);
            }
            arclength_param.push(acc);
        }
        Ok(Self {
            waypoints,
            arclength_param,
            spline_x,
            spline_y,
            table_u,
            table_s,
        })
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    /// Cumulative arc length at each waypoint.
    pub fn arclength_param(&self) -> &[f64] {
        &self.arclength_param
    }

    pub fn total_length(&self) -> f64 {
        *self.arclength_param.last().expect("nonempty")
    }

    /// Spline parameter for a clamped arc length.
    fn param_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.total_length());
        let idx = match self
            .table_s
            .binary_search_by(|v| v.partial_cmp(&s).expect("finite arc length"))
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        if idx + 1 >= self.table_s.len() {
            return *self.table_u.last().expect("nonempty");
        }
        let (s0, s1) = (self.table_s[idx], self.table_s[idx + 1]);
        let (u0, u1) = (self.table_u[idx], self.table_u[idx + 1]);
        let mut u = if s1 > s0 {
            u0 + (u1 - u0) * (s - s0) / (s1 - s0)
        } else {
            u0
        };
        // One Newton step on arc(u) = s sharpens the linear seed; the local
        // arc increment is re-integrated from the nearest table node.
        for _ in 0..2 {
            let speed = {
                let dx = self.spline_x.deriv(u);
                let dy = self.spline_y.deriv(u);
                dx.hypot(dy)
            };
            if speed < 1e-12 {
                break;
            }
            let local = self.arc_between(u0, u);
            u -= (local - (s - s0)) / speed;
            u = u.clamp(u0, u1);
        }
        u
    }

    fn arc_between(&self, a: f64, b: f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            let u = mid + half * node;
            acc += weight * self.spline_x.deriv(u).hypot(self.spline_y.deriv(u));
        }
        acc * half
    }

    /// Position and unit-tangent angle at arc length `s` (clamped to the
    /// path's extent).
    pub fn path_eval(&self, s: f64) -> (Vec2, f64) {
        let p = self.eval_full(s);
        (p.position, p.tangent_angle)
    }

    /// Position, tangent, and curvature at arc length `s`.
    pub fn eval_full(&self, s: f64) -> PathPoint {
        let u = self.param_at(s);
        let position = Vec2::new(self.spline_x.eval(u), self.spline_y.eval(u));
        let dx = self.spline_x.deriv(u);
        let dy = self.spline_y.deriv(u);
        let ddx = self.spline_x.second_deriv(u);
        let ddy = self.spline_y.second_deriv(u);
        let speed_sq = dx * dx + dy * dy;
        let curvature = if speed_sq > 1e-18 {
            (dx * ddy - dy * ddx) / speed_sq.powf(1.5)
        } else {
            0.0
        };
        PathPoint {
            position,
            tangent_angle: dy.atan2(dx),
            curvature,
        }
    }

    /// Arc length of the point on the path closest to `p`.
    ///
    /// Coarse scan over the arc-length table followed by a few projected
    /// Newton steps; adequate for paths without tight self-intersections.
    pub fn closest_arclength(&self, p: Vec2) -> f64 {
        let mut best_s = 0.0;
        let mut best_d = f64::INFINITY;
        for (u, s) in self.table_u.iter().zip(self.table_s.iter()) {
            let q = Vec2::new(self.spline_x.eval(*u), self.spline_y.eval(*u));
            let d = (q - p).norm_squared();
            if d < best_d {
                best_d = d;
                best_s = *s;
            }
        }
        let mut s = best_s;
        for _ in 0..8 {
            let pt = self.eval_full(s);
            let tangent = Vec2::new(pt.tangent_angle.cos(), pt.tangent_angle.sin());
            let step = (p - pt.position).dot(&tangent);
            s = (s + step).clamp(0.0, self.total_length());
            if step.abs() < 1e-10 {
                break;
            }
        }
        s
    }

    /// Distance from `p` to the path.
    pub fn lateral_distance(&self, p: Vec2) -> f64 {
        let s = self.closest_arclength(p);
        (self.eval_full(s).position - p).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> ReferencePath {
        ReferencePath::from_waypoints(vec![
            Waypoint::new(0.0, 0.0, 0.0),
            Waypoint::new(10.0, 0.0, 0.0),
        ])
        .unwrap()
    }

    fn wiggly() -> ReferencePath {
        ReferencePath::from_waypoints(vec![
            Waypoint::new(0.0, 0.0, 0.0),
            Waypoint::new(3.0, 1.5, 0.0),
            Waypoint::new(6.0, -1.0, 0.0),
            Waypoint::new(9.0, 0.5, 0.0),
            Waypoint::new(12.0, 0.0, 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn straight_segment_midpoint() {
        let path = straight();
        let (p, theta) = path.path_eval(5.0);
        assert!((p - Vec2::new(5.0, 0.0)).norm() < 1e-9);
        assert!(theta.abs() < 1e-9);
    }

    #[test]
    fn endpoint_and_clamping() {
        let path = straight();
        let (p0, _) = path.path_eval(0.0);
        assert!((p0 - Vec2::new(0.0, 0.0)).norm() < 1e-12);
        let (past, _) = path.path_eval(1e6);
        assert!((past - Vec2::new(10.0, 0.0)).norm() < 1e-9);
        let (before, _) = path.path_eval(-3.0);
        assert!((before - Vec2::new(0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(ReferencePath::from_waypoints(vec![Waypoint::new(0.0, 0.0, 0.0)]).is_err());
        assert!(ReferencePath::from_waypoints(vec![
            Waypoint::new(0.0, 0.0, 0.0),
            Waypoint::new(0.0, 0.0, 0.0),
        ])
        .is_err());
    }

    #[test]
    fn passes_through_waypoints() {
        let path = wiggly();
        for (w, s) in path.waypoints().iter().zip(path.arclength_param().iter()) {
            let (p, _) = path.path_eval(*s);
            assert!(
                (p - w.position()).norm() < 1e-6,
                "waypoint miss at s={s}: {p:?} vs {w:?}"
            );
        }
    }

    #[test]
    fn unit_speed_parameterization() {
        let path = wiggly();
        let total = path.total_length();
        let h = 1e-4;
        let mut s = 0.05;
        while s < total - 0.05 {
            let (p0, _) = path.path_eval(s);
            let (p1, _) = path.path_eval(s + h);
            let rate = (p1 - p0).norm() / h;
            assert!(
                (0.9..=1.1).contains(&rate),
                "speed {rate} at s={s} not near unit"
            );
            s += 0.37;
        }
    }

    #[test]
    fn lipschitz_continuity() {
        let path = wiggly();
        let total = path.total_length();
        let lipschitz = 1.1;
        for i in 0..400 {
            let s = total * (i as f64) / 400.0;
            let h = 0.01;
            let (p0, _) = path.path_eval(s);
            let (p1, _) = path.path_eval(s + h);
            assert!((p1 - p0).norm() <= lipschitz * h + 1e-9);
        }
    }

    #[test]
    fn closest_point_straight() {
        let path = straight();
        let s = path.closest_arclength(Vec2::new(4.0, 2.0));
        assert!((s - 4.0).abs() < 1e-6);
        assert!((path.lateral_distance(Vec2::new(4.0, 2.0)) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn curvature_of_straight_path_is_zero() {
        let path = straight();
        assert!(path.eval_full(5.0).curvature.abs() < 1e-12);
    }
}
