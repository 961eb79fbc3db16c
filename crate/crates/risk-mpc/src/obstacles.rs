//! Pedestrian ground truth, per-stage mixture predictions, and scenario
//! sampling.
//!
//! The generative simulation dynamics double as the prediction model: the
//! planner samples obstacle futures from exactly the process that drives
//! the simulated pedestrians, so the predictor is calibrated by
//! construction. Two motion kinds are supported: a constant-velocity walk
//! with Gaussian noise, and a Markov chain that may switch once from
//! horizontal to diagonal travel (the switch stage is absorbing), whose
//! stage-wise uncertainty is a mixture with one mode per switch stage.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Mat2, Vec2};

/// Horizontal travel direction of the Markov model.
pub const B_HORIZONTAL: Vec2 = Vec2::new(1.0, 0.0);
/// Diagonal travel direction after the switch.
pub const B_DIAGONAL: Vec2 = Vec2::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);

#[derive(Debug, thiserror::Error)]
pub enum GmmError {
    #[error("mode weight {0} outside [0, 1]")]
    BadWeight(f64),
    #[error("covariance is not symmetric positive semi-definite")]
    NotPsd,
    #[error("mixture weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("mixture needs at least one mode")]
    Empty,
    #[error("singular covariance: density undefined")]
    SingularModel,
    #[error("per-stage mixtures must share one mode count")]
    UnevenModeCount,
    #[error("stage-0 mixture must collapse to the measured position")]
    BadStageZero,
    #[error("invalid motion config: {0}")]
    BadConfig(String),
}

/// One weighted Gaussian of a position mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMode {
    pub weight: f64,
    pub mean: Vec2,
    pub covariance: Mat2,
}

/// Smallest admissible eigenvalue when validating covariances.
const PSD_TOL: f64 = 1e-12;

fn min_eigenvalue(m: &Mat2) -> f64 {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt())
}

fn check_psd(m: &Mat2) -> Result<(), GmmError> {
    if (m[(0, 1)] - m[(1, 0)]).abs() > 1e-9 || min_eigenvalue(m) < -PSD_TOL {
        return Err(GmmError::NotPsd);
    }
    Ok(())
}

impl GaussianMode {
    pub fn new(weight: f64, mean: Vec2, covariance: Mat2) -> Result<Self, GmmError> {
        if !(0.0..=1.0 + 1e-12).contains(&weight) {
            return Err(GmmError::BadWeight(weight));
        }
        check_psd(&covariance)?;
        Ok(Self {
            weight,
            mean,
            covariance,
        })
    }

    /// Lower Cholesky factor, clamped so exactly-singular covariances
    /// (zero noise, stage 0) sample deterministically.
    pub(crate) fn chol_lower(&self) -> Mat2 {
        let a = self.covariance[(0, 0)].max(0.0);
        let l11 = a.sqrt();
        let l21 = if l11 > 0.0 {
            self.covariance[(1, 0)] / l11
        } else {
            0.0
        };
        let l22 = (self.covariance[(1, 1)] - l21 * l21).max(0.0).sqrt();
        Mat2::new(l11, 0.0, l21, l22)
    }

    fn density(&self, point: Vec2) -> Result<f64, GmmError> {
        let det = self.covariance[(0, 0)] * self.covariance[(1, 1)]
            - self.covariance[(0, 1)] * self.covariance[(1, 0)];
        if det <= 1e-300 || self.covariance[(0, 0)] <= 0.0 {
            return Err(GmmError::SingularModel);
        }
        let d = point - self.mean;
        let quad = (self.covariance[(1, 1)] * d.x * d.x - 2.0 * self.covariance[(0, 1)] * d.x * d.y
            + self.covariance[(0, 0)] * d.y * d.y)
            / det;
        Ok((-0.5 * quad).exp() / (2.0 * std::f64::consts::PI * det.sqrt()))
    }
}

/// Weighted sum of Gaussian modes; weights are validated to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    modes: Vec<GaussianMode>,
}

impl GaussianMixture {
    pub fn new(modes: Vec<GaussianMode>) -> Result<Self, GmmError> {
        if modes.is_empty() {
            return Err(GmmError::Empty);
        }
        let total: f64 = modes.iter().map(|m| m.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(GmmError::WeightsNotNormalized(total));
        }
        Ok(Self { modes })
    }

    pub fn modes(&self) -> &[GaussianMode] {
        &self.modes
    }

    pub fn single(mean: Vec2, covariance: Mat2) -> Result<Self, GmmError> {
        Self::new(vec![GaussianMode::new(1.0, mean, covariance)?])
    }
}

/// Mixture density at a point (1/m²). Stage-0 style zero covariances are
/// rejected as singular.
pub fn gmm_pdf(mix: &GaussianMixture, point: Vec2) -> Result<f64, GmmError> {
    let mut acc = 0.0;
    for mode in mix.modes() {
        acc += mode.weight * mode.density(point)?;
    }
    Ok(acc)
}

/// Per-stage positional uncertainty of one obstacle over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstaclePrediction {
    pub obstacle_id: usize,
    /// Obstacle radius r_v (m).
    pub radius: f64,
    /// Mixtures for stages 0..=N; stage 0 is the measured position.
    pub per_stage: Vec<GaussianMixture>,
}

impl ObstaclePrediction {
    pub fn new(
        obstacle_id: usize,
        radius: f64,
        per_stage: Vec<GaussianMixture>,
    ) -> Result<Self, GmmError> {
        if per_stage.is_empty() {
            return Err(GmmError::Empty);
        }
        let count = per_stage[0].modes().len();
        if per_stage.iter().any(|m| m.modes().len() != count) {
            return Err(GmmError::UnevenModeCount);
        }
        let stage0 = &per_stage[0];
        let p0 = stage0.modes()[0].mean;
        for mode in stage0.modes() {
            if (mode.mean - p0).norm() > 1e-9 || mode.covariance.norm() > 1e-9 {
                return Err(GmmError::BadStageZero);
            }
        }
        Ok(Self {
            obstacle_id,
            radius,
            per_stage,
        })
    }

    pub fn horizon(&self) -> usize {
        self.per_stage.len() - 1
    }
}

/// Which generative model drives a pedestrian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Unimodal,
    MarkovGmm,
}

/// Markov phase of the switching walk; `Diagonal` is absorbing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarkovPhase {
    Horizontal,
    Diagonal,
}

/// Ground-truth state of one simulated pedestrian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedestrianSimState {
    pub position: Vec2,
    /// Nominal velocity 𝒗; the Markov model uses its norm as the speed
    /// scalar along the world-frame directions.
    pub nominal_velocity: Vec2,
    pub markov_state: MarkovPhase,
    pub rng_stream_id: u64,
}

/// Noise and chain parameters at the planning step `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionModelConfig {
    /// Per-step velocity-noise covariance Σ_w.
    pub sigma_w: Mat2,
    /// Probability of staying horizontal over one `dt` step.
    pub p_stay: f64,
    /// Step length (s).
    pub dt: f64,
    pub model_kind: ModelKind,
}

impl MotionModelConfig {
    pub fn validate(&self) -> Result<(), GmmError> {
        if !(0.0..=1.0).contains(&self.p_stay) {
            return Err(GmmError::BadConfig(format!("p_stay {}", self.p_stay)));
        }
        if self.dt <= 0.0 {
            return Err(GmmError::BadConfig(format!("dt {}", self.dt)));
        }
        check_psd(&self.sigma_w)
    }

    /// The same process expressed at a finer step `h` dividing `dt`:
    /// noise variance scales by dt/h and the stay probability by h/dt, so
    /// statistics aggregated back to `dt` match this config exactly.
    pub fn at_substep(&self, h: f64) -> MotionModelConfig {
        MotionModelConfig {
            sigma_w: self.sigma_w * (self.dt / h),
            p_stay: self.p_stay.powf(h / self.dt),
            dt: h,
            model_kind: self.model_kind,
        }
    }
}

fn sample_noise(sigma: &Mat2, rng: &mut impl Rng) -> Vec2 {
    let z = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let a: f64 = sigma[(0, 0)].max(0.0);
    let l11 = a.sqrt();
    let l21 = if l11 > 0.0 { sigma[(1, 0)] / l11 } else { 0.0 };
    let l22 = (sigma[(1, 1)] - l21 * l21).max(0.0).sqrt();
    Vec2::new(l11 * z.x, l21 * z.x + l22 * z.y)
}

/// Advances one pedestrian by one step of its stochastic dynamics.
///
/// Markov pedestrians first sample the phase transition, then move along
/// the post-transition direction.
pub fn step_pedestrian(
    state: &PedestrianSimState,
    cfg: &MotionModelConfig,
    rng: &mut impl Rng,
) -> PedestrianSimState {
    let mut next = state.clone();
    let w = sample_noise(&cfg.sigma_w, rng);
    let velocity = match cfg.model_kind {
        ModelKind::Unimodal => state.nominal_velocity,
        ModelKind::MarkovGmm => {
            if next.markov_state == MarkovPhase::Horizontal {
                let u: f64 = rng.random();
                if u >= cfg.p_stay {
                    next.markov_state = MarkovPhase::Diagonal;
                }
            }
            let dir = match next.markov_state {
                MarkovPhase::Horizontal => B_HORIZONTAL,
                MarkovPhase::Diagonal => B_DIAGONAL,
            };
            dir * state.nominal_velocity.norm()
        }
    };
    next.position += (velocity + w) * cfg.dt;
    next
}

/// Stage-k covariance of the accumulated per-step noise: k·dt²·Σ_w.
fn stage_covariance(cfg: &MotionModelConfig, k: usize) -> Mat2 {
    cfg.sigma_w * (k as f64 * cfg.dt * cfg.dt)
}

/// Constant-velocity prediction: stage-k mean shifts by k·dt·𝒗 and the
/// covariance grows linearly in k.
pub fn predict_unimodal(
    current: Vec2,
    velocity: Vec2,
    cfg: &MotionModelConfig,
    n: usize,
) -> Vec<GaussianMixture> {
    (0..=n)
        .map(|k| {
            GaussianMixture::single(
                current + velocity * (k as f64 * cfg.dt),
                stage_covariance(cfg, k),
            )
            .expect("single unit-weight mode")
        })
        .collect()
}

/// Switching-walk prediction for a pedestrian currently in the horizontal
/// phase: one mode per switch stage j ∈ {1..N} plus the no-switch mode.
///
/// The switch-at-j weight is p^(j−1)·(1−p), built as the telescoping
/// difference of consecutive powers so the weights sum to one exactly;
/// the no-switch mode carries the p^N remainder.
pub fn predict_markov_gmm(
    current: Vec2,
    v_scalar: f64,
    cfg: &MotionModelConfig,
    n: usize,
) -> Vec<GaussianMixture> {
    let p = cfg.p_stay;
    // powers[j] = p^j for j = 0..=N.
    let mut powers = Vec::with_capacity(n + 1);
    powers.push(1.0);
    for j in 1..=n {
        powers.push(powers[j - 1] * p);
    }
    let step_h = B_HORIZONTAL * (v_scalar * cfg.dt);
    let step_d = B_DIAGONAL * (v_scalar * cfg.dt);
    (0..=n)
        .map(|k| {
            let cov = stage_covariance(cfg, k);
            let mut modes = Vec::with_capacity(n + 1);
            for j in 1..=n {
                let weight = (powers[j - 1] - powers[j]).max(0.0);
                let h_steps = k.min(j - 1) as f64;
                let d_steps = k.saturating_sub(j - 1) as f64;
                let mean = current + step_h * h_steps + step_d * d_steps;
                modes.push(GaussianMode::new(weight, mean, cov).expect("valid mode"));
            }
            let no_switch_mean = current + step_h * k as f64;
            modes.push(GaussianMode::new(powers[n], no_switch_mean, cov).expect("valid mode"));
            GaussianMixture::new(modes).expect("telescoping weights")
        })
        .collect()
}

/// Prediction dispatch for a pedestrian's current state. A pedestrian
/// already in the diagonal phase has no branching left, so its prediction
/// collapses to a single mode along the diagonal direction.
pub fn predict(
    state: &PedestrianSimState,
    cfg: &MotionModelConfig,
    n: usize,
) -> Vec<GaussianMixture> {
    match (cfg.model_kind, state.markov_state) {
        (ModelKind::Unimodal, _) => predict_unimodal(state.position, state.nominal_velocity, cfg, n),
        (ModelKind::MarkovGmm, MarkovPhase::Horizontal) => {
            predict_markov_gmm(state.position, state.nominal_velocity.norm(), cfg, n)
        }
        (ModelKind::MarkovGmm, MarkovPhase::Diagonal) => predict_unimodal(
            state.position,
            B_DIAGONAL * state.nominal_velocity.norm(),
            cfg,
            n,
        ),
    }
}

/// S sampled obstacle futures over the horizon, laid out flat per
/// (scenario, obstacle, stage).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub num_scenarios: usize,
    pub num_obstacles: usize,
    /// Stages per trajectory, including stage 0.
    pub horizon: usize,
    points: Vec<Vec2>,
}

impl ScenarioSet {
    pub fn point(&self, scenario: usize, obstacle: usize, stage: usize) -> Vec2 {
        self.points[(scenario * self.num_obstacles + obstacle) * (self.horizon + 1) + stage]
    }

    #[cfg(test)]
    pub(crate) fn merge_for_tests(&mut self, other: &ScenarioSet) {
        assert_eq!(self.num_obstacles, other.num_obstacles);
        assert_eq!(self.horizon, other.horizon);
        self.points.extend_from_slice(&other.points);
        self.num_scenarios += other.num_scenarios;
    }
}

/// Draws S independent full-horizon obstacle trajectories by rolling the
/// stochastic dynamics forward N steps.
pub fn sample_scenarios(
    states: &[PedestrianSimState],
    cfg: &MotionModelConfig,
    n: usize,
    s: usize,
    rng: &mut impl Rng,
) -> ScenarioSet {
    let mut points = Vec::with_capacity(s * states.len() * (n + 1));
    for _ in 0..s {
        for ped in states {
            let mut current = ped.clone();
            points.push(current.position);
            for _ in 0..n {
                current = step_pedestrian(&current, cfg, rng);
                points.push(current.position);
            }
        }
    }
    ScenarioSet {
        num_scenarios: s,
        num_obstacles: states.len(),
        horizon: n,
        points,
    }
}

/// Everything the planners and the risk assessor need about the obstacles
/// for one control cycle: the sampling model plus the per-stage mixtures.
#[derive(Debug, Clone)]
pub struct PerceptionFrame {
    pub states: Vec<PedestrianSimState>,
    pub motion: MotionModelConfig,
    pub predictions: Vec<ObstaclePrediction>,
}

impl PerceptionFrame {
    pub fn new(
        states: Vec<PedestrianSimState>,
        motion: MotionModelConfig,
        radii: &[f64],
        n: usize,
    ) -> Result<Self, GmmError> {
        motion.validate()?;
        if radii.len() != states.len() {
            return Err(GmmError::BadConfig(format!(
                "{} radii for {} obstacles",
                radii.len(),
                states.len()
            )));
        }
        let predictions = states
            .iter()
            .enumerate()
            .map(|(id, ped)| ObstaclePrediction::new(id, radii[id], predict(ped, &motion, n)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            states,
            motion,
            predictions,
        })
    }

    pub fn num_obstacles(&self) -> usize {
        self.states.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use rand::SeedableRng;

    fn cfg(sigma: f64, p_stay: f64, kind: ModelKind) -> MotionModelConfig {
        MotionModelConfig {
            sigma_w: Mat2::identity() * sigma,
            p_stay,
            dt: 0.2,
            model_kind: kind,
        }
    }

    fn ped(x: f64, y: f64, vx: f64, vy: f64) -> PedestrianSimState {
        PedestrianSimState {
            position: Vec2::new(x, y),
            nominal_velocity: Vec2::new(vx, vy),
            markov_state: MarkovPhase::Horizontal,
            rng_stream_id: 0,
        }
    }

    #[test]
    fn unimodal_step_without_noise() {
        let mut rng = seeds::stream(1, "test", 0);
        let next = step_pedestrian(&ped(0.0, 0.0, 1.0, 0.0), &cfg(0.0, 1.0, ModelKind::Unimodal), &mut rng);
        assert!((next.position - Vec2::new(0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn diagonal_step_without_noise() {
        let mut rng = seeds::stream(1, "test", 0);
        let mut state = ped(0.0, 0.0, 1.0, 0.0);
        state.markov_state = MarkovPhase::Diagonal;
        let next = step_pedestrian(&state, &cfg(0.0, 0.975, ModelKind::MarkovGmm), &mut rng);
        assert!((next.position - Vec2::new(0.1414, 0.1414)).norm() < 1e-4);
        assert_eq!(next.markov_state, MarkovPhase::Diagonal);
    }

    #[test]
    fn transition_frequency_matches_p_stay() {
        let c = cfg(0.0, 0.975, ModelKind::MarkovGmm);
        let mut rng = seeds::stream(7, "markov", 0);
        let mut switched = 0usize;
        let trials = 100_000;
        for _ in 0..trials {
            let next = step_pedestrian(&ped(0.0, 0.0, 1.0, 0.0), &c, &mut rng);
            if next.markov_state == MarkovPhase::Diagonal {
                switched += 1;
            }
        }
        let rate = switched as f64 / trials as f64;
        assert!((rate - 0.025).abs() < 0.002, "switch rate {rate}");
    }

    #[test]
    fn unimodal_prediction_moments() {
        let c = cfg(0.25, 1.0, ModelKind::Unimodal);
        let stages = predict_unimodal(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), &c, 20);
        assert_eq!(stages.len(), 21);
        // k = 0: no propagation.
        assert!((stages[0].modes()[0].mean).norm() < 1e-15);
        assert!(stages[0].modes()[0].covariance.norm() < 1e-15);
        // k = 5: constant-velocity mean shift.
        assert!((stages[5].modes()[0].mean - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        // k = 20: closed-form variance sum 20·0.04·0.25 = 0.2 per axis.
        let cov = stages[20].modes()[0].covariance;
        assert!((cov - Mat2::identity() * 0.2).norm() < 1e-12);
    }

    #[test]
    fn predicted_covariance_matches_rollout_statistics() {
        let c = cfg(0.25, 1.0, ModelKind::Unimodal);
        let mut rng = seeds::stream(3, "rollout", 0);
        let runs = 100_000;
        let k = 20;
        let mut sum = Vec2::zeros();
        let mut sum_outer = Mat2::zeros();
        for _ in 0..runs {
            let mut state = ped(0.0, 0.0, 1.0, 0.0);
            for _ in 0..k {
                state = step_pedestrian(&state, &c, &mut rng);
            }
            sum += state.position;
            sum_outer += state.position * state.position.transpose();
        }
        let mean = sum / runs as f64;
        let cov = sum_outer / runs as f64 - mean * mean.transpose();
        let predicted = Mat2::identity() * 0.2;
        for i in 0..2 {
            assert!(
                (cov[(i, i)] - predicted[(i, i)]).abs() / predicted[(i, i)] < 0.05,
                "diagonal {i}: {} vs {}",
                cov[(i, i)],
                predicted[(i, i)]
            );
        }
    }

    #[test]
    fn markov_two_step_weights_enumerate() {
        let c = cfg(0.25, 0.975, ModelKind::MarkovGmm);
        let stages = predict_markov_gmm(Vec2::zeros(), 1.0, &c, 2);
        let weights: Vec<f64> = stages[2].modes().iter().map(|m| m.weight).collect();
        // Modes ordered: switch at 1, switch at 2, no switch.
        assert!((weights[0] - 0.025).abs() < 1e-15);
        assert!((weights[1] - 0.024375).abs() < 1e-15);
        assert!((weights[2] - 0.950625).abs() < 1e-15);
        let total: f64 = weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn markov_has_horizon_plus_one_modes() {
        let c = cfg(0.25, 0.975, ModelKind::MarkovGmm);
        let stages = predict_markov_gmm(Vec2::zeros(), 1.0, &c, 20);
        for mix in &stages {
            assert_eq!(mix.modes().len(), 21);
        }
    }

    #[test]
    fn markov_weight_normalization_sweep() {
        for n in 1..=50 {
            for p in [0.0, 0.5, 0.975, 1.0] {
                let c = cfg(0.25, p, ModelKind::MarkovGmm);
                let stages = predict_markov_gmm(Vec2::zeros(), 1.0, &c, n);
                for mix in &stages {
                    let total: f64 = mix.modes().iter().map(|m| m.weight).sum();
                    assert!((total - 1.0).abs() < 1e-9, "n={n} p={p} sum={total}");
                }
            }
        }
    }

    #[test]
    fn degenerate_chain_equals_unimodal() {
        let c = cfg(0.25, 1.0, ModelKind::MarkovGmm);
        let markov = predict_markov_gmm(Vec2::new(0.5, -0.25), 1.0, &c, 20);
        let uni = predict_unimodal(Vec2::new(0.5, -0.25), B_HORIZONTAL, &c, 20);
        for (m, u) in markov.iter().zip(uni.iter()) {
            let live: Vec<&GaussianMode> = m.modes().iter().filter(|md| md.weight > 0.0).collect();
            assert_eq!(live.len(), 1);
            assert!((live[0].mean - u.modes()[0].mean).norm() < 1e-12);
            assert!((live[0].covariance - u.modes()[0].covariance).norm() < 1e-12);
        }
    }

    #[test]
    fn pdf_standard_normal_peak() {
        let mix = GaussianMixture::single(Vec2::zeros(), Mat2::identity()).unwrap();
        let d = gmm_pdf(&mix, Vec2::zeros()).unwrap();
        assert!((d - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn pdf_identical_modes_collapse() {
        let mode = |w| GaussianMode::new(w, Vec2::new(1.0, 2.0), Mat2::identity() * 0.5).unwrap();
        let two = GaussianMixture::new(vec![mode(0.5), mode(0.5)]).unwrap();
        let one = GaussianMixture::new(vec![mode(1.0)]).unwrap();
        let p = Vec2::new(1.3, 1.8);
        assert!((gmm_pdf(&two, p).unwrap() - gmm_pdf(&one, p).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn pdf_far_mode_contributes_nothing() {
        let near = GaussianMode::new(0.3, Vec2::zeros(), Mat2::identity()).unwrap();
        let far = GaussianMode::new(0.7, Vec2::new(100.0, 0.0), Mat2::identity()).unwrap();
        let mix = GaussianMixture::new(vec![near, far]).unwrap();
        let d = gmm_pdf(&mix, Vec2::zeros()).unwrap();
        assert!((d - 0.3 / (2.0 * std::f64::consts::PI)).abs() < 1e-9);
    }

    #[test]
    fn pdf_rejects_singular_covariance() {
        let mix = GaussianMixture::single(Vec2::zeros(), Mat2::zeros()).unwrap();
        assert!(matches!(
            gmm_pdf(&mix, Vec2::zeros()),
            Err(GmmError::SingularModel)
        ));
    }

    #[test]
    fn pdf_integrates_to_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            // Random PD covariance via A·Aᵀ + floor.
            let a = Mat2::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            let cov = a * a.transpose() + Mat2::identity() * 0.05;
            let mean = Vec2::new(rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0);
            let mix = GaussianMixture::single(mean, cov).unwrap();
            let sigma_max = cov[(0, 0)].max(cov[(1, 1)]).sqrt();
            let half = 6.0 * sigma_max;
            let res = 400;
            let cell = 2.0 * half / res as f64;
            let mut total = 0.0;
            for i in 0..res {
                for j in 0..res {
                    let p = mean
                        + Vec2::new(
                            -half + (i as f64 + 0.5) * cell,
                            -half + (j as f64 + 0.5) * cell,
                        );
                    total += gmm_pdf(&mix, p).unwrap();
                }
            }
            total *= cell * cell;
            assert!((total - 1.0).abs() < 1e-3, "mass {total}");
        }
    }

    #[test]
    fn scenarios_degenerate_noise_equals_mean_rollout() {
        let c = cfg(0.0, 1.0, ModelKind::Unimodal);
        let peds = vec![ped(0.0, 0.0, 1.0, 0.5)];
        let mut rng = seeds::stream(5, "scenario", 0);
        let set = sample_scenarios(&peds, &c, 10, 4, &mut rng);
        for i in 0..4 {
            for k in 0..=10 {
                let expect = Vec2::new(0.2 * k as f64, 0.1 * k as f64);
                assert!((set.point(i, 0, k) - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn scenarios_are_seed_deterministic() {
        let c = cfg(0.25, 0.975, ModelKind::MarkovGmm);
        let peds = vec![ped(0.0, 0.0, 1.0, 0.0), ped(2.0, 1.0, 1.0, 0.0)];
        let a = sample_scenarios(&peds, &c, 20, 3, &mut seeds::stream(9, "s", 1));
        let b = sample_scenarios(&peds, &c, 20, 3, &mut seeds::stream(9, "s", 1));
        assert_eq!(a, b);
    }

    #[test]
    fn scenario_sample_mean_matches_prediction() {
        let c = cfg(0.25, 1.0, ModelKind::Unimodal);
        let peds = vec![ped(0.0, 0.0, 1.0, 0.0)];
        let s = 10_000;
        let mut rng = seeds::stream(13, "lln", 0);
        let set = sample_scenarios(&peds, &c, 20, s, &mut rng);
        let pred = predict_unimodal(Vec2::zeros(), Vec2::new(1.0, 0.0), &c, 20);
        for k in [5usize, 20usize] {
            let mut mean = Vec2::zeros();
            for i in 0..s {
                mean += set.point(i, 0, k);
            }
            mean /= s as f64;
            let sigma_k = pred[k].modes()[0].covariance[(0, 0)].sqrt();
            let tol = 3.0 * sigma_k / (s as f64).sqrt();
            assert!(
                (mean - pred[k].modes()[0].mean).norm() < 3.0 * tol,
                "stage {k}: |{mean:?} - {:?}| vs {tol}",
                pred[k].modes()[0].mean
            );
        }
    }

    #[test]
    fn scenario_marginal_covariance_matches_prediction() {
        let c = cfg(0.25, 1.0, ModelKind::Unimodal);
        let peds = vec![ped(0.0, 0.0, 1.0, 0.0)];
        let s = 100_000;
        let mut rng = seeds::stream(17, "cov", 0);
        let set = sample_scenarios(&peds, &c, 10, s, &mut rng);
        let k = 10;
        let mut sum = Vec2::zeros();
        let mut outer = Mat2::zeros();
        for i in 0..s {
            let p = set.point(i, 0, k);
            sum += p;
            outer += p * p.transpose();
        }
        let mean = sum / s as f64;
        let cov = outer / s as f64 - mean * mean.transpose();
        let expect = k as f64 * 0.04 * 0.25;
        for i in 0..2 {
            assert!(
                (cov[(i, i)] - expect).abs() / expect < 0.10,
                "axis {i}: {} vs {expect}",
                cov[(i, i)]
            );
        }
    }

    #[test]
    fn substep_config_preserves_aggregate_statistics() {
        let c = cfg(0.25, 0.975, ModelKind::MarkovGmm);
        let sub = c.at_substep(0.05);
        // Displacement variance over 4 substeps equals one dt step.
        let agg = 4.0 * 0.05 * 0.05 * sub.sigma_w[(0, 0)];
        assert!((agg - 0.2 * 0.2 * 0.25).abs() < 1e-12);
        // Staying horizontal across 4 substeps equals p_stay.
        assert!((sub.p_stay.powi(4) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn mixture_rejects_bad_weights() {
        let m = GaussianMode::new(0.4, Vec2::zeros(), Mat2::identity()).unwrap();
        assert!(matches!(
            GaussianMixture::new(vec![m]),
            Err(GmmError::WeightsNotNormalized(_))
        ));
        assert!(GaussianMode::new(1.2, Vec2::zeros(), Mat2::identity()).is_err());
        assert!(GaussianMode::new(0.5, Vec2::zeros(), Mat2::new(1.0, 0.9, 0.9, 0.5)).is_err());
    }

    #[test]
    fn perception_frame_builds_predictions() {
        let c = cfg(0.25, 0.975, ModelKind::MarkovGmm);
        let mut diag = ped(1.0, 1.0, 1.0, 0.0);
        diag.markov_state = MarkovPhase::Diagonal;
        let frame =
            PerceptionFrame::new(vec![ped(0.0, 0.0, 1.0, 0.0), diag], c, &[0.3, 0.3], 20).unwrap();
        assert_eq!(frame.predictions.len(), 2);
        assert_eq!(frame.predictions[0].per_stage[5].modes().len(), 21);
        // Diagonal pedestrian collapses to a single mode.
        assert_eq!(frame.predictions[1].per_stage[5].modes().len(), 1);
    }
}
