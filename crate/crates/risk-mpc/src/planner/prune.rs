//! Scenario pruning: cap the constraint count per (stage, disc, obstacle)
//! by keeping the sample points nearest the linearization trajectory.
//!
//! The QP row count would otherwise scale with the full sample size S
//! (hundreds per planner); far samples are dominated by nearer ones at the
//! linearization point. Retained indices are recorded so support
//! accounting stays exact over the retained set.

use crate::obstacles::ScenarioSet;
use crate::types::{disc_centers, Footprint, RobotState};
use crate::Vec2;

/// View into a [`ScenarioSet`]: per (stage 1..=N, disc, obstacle), the
/// retained scenario indices sorted by distance.
#[derive(Debug, Clone)]
pub struct RetainedScenarios {
    num_discs: usize,
    num_obstacles: usize,
    /// Flat per (stage-1, disc, obstacle).
    indices: Vec<Vec<usize>>,
}

impl RetainedScenarios {
    pub fn retained(&self, stage: usize, disc: usize, obstacle: usize) -> &[usize] {
        debug_assert!(stage >= 1);
        &self.indices
            [((stage - 1) * self.num_discs + disc) * self.num_obstacles + obstacle]
    }

    pub fn total_rows(&self) -> usize {
        self.indices.iter().map(Vec::len).sum()
    }
}

/// Keeps the `keep` scenario points nearest each disc center of the
/// linearization trajectory. Ties break on scenario index, so the view is
/// deterministic.
pub fn prune_scenarios(
    set: &ScenarioSet,
    xhat: &[RobotState],
    footprint: &Footprint,
    keep: usize,
) -> RetainedScenarios {
    assert!(keep >= 1, "keep_count must be at least 1");
    assert!(
        xhat.len() > set.horizon,
        "linearization trajectory shorter than the scenario horizon"
    );
    let num_discs = footprint.num_discs();
    let num_obstacles = set.num_obstacles;
    let mut indices =
        Vec::with_capacity(set.horizon * num_discs * num_obstacles);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(set.num_scenarios);
    for stage in 1..=set.horizon {
        let centers = disc_centers(&xhat[stage], footprint);
        for center in centers.iter().take(num_discs) {
            for obstacle in 0..num_obstacles {
                scratch.clear();
                for scenario in 0..set.num_scenarios {
                    let d = distance_sq(set.point(scenario, obstacle, stage), *center);
                    scratch.push((d, scenario));
                }
                scratch.sort_by(|a, b| {
                    a.0.partial_cmp(&b.0)
                        .expect("finite distance")
                        .then(a.1.cmp(&b.1))
                });
                indices.push(
                    scratch
                        .iter()
                        .take(keep)
                        .map(|&(_, i)| i)
                        .collect::<Vec<_>>(),
                );
            }
        }
    }
    RetainedScenarios {
        num_discs,
        num_obstacles,
        indices,
    }
}

fn distance_sq(a: Vec2, b: Vec2) -> f64 {
    (a - b).norm_squared()
}
