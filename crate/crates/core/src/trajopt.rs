//! Lane-change trajectory generation by single shooting: the summed reward
//! is maximized directly over the lifted control vector, with states always
//! produced by the rollout.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::RewardModel;
use crate::linalg::norm;
use crate::objective::{controls_from_lifted, Objective, Order};
use crate::optim::{maximize, AscentReport, AscentSettings, Bounds, Termination};
use crate::prediction::UnpredictabilitySeries;
use crate::scenario::{Control, Scenario, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialGuess {
    /// Constant controls at the ego's observed initial speed, no turning.
    ObservedSpeed,
    /// The scenario's recorded ego controls.
    Recorded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub initial_guess: InitialGuess,
    pub restarts: usize,
    pub seed: u64,
    /// Standard deviations of the restart perturbation of `v` and `ω`.
    pub restart_sigma: [f64; 2],
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            grad_tol: 1e-6,
            step_tol: 1e-12,
            initial_guess: InitialGuess::ObservedSpeed,
            restarts: 0,
            seed: 0,
            restart_sigma: [0.5, 0.02],
            v_max: 60.0,
            omega_max: 1.0,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("optimizer needs at least one iteration".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.step_tol > 0.0) {
            return Err(Error::Config("optimizer tolerances must be positive".into()));
        }
        if !(self.v_max > 0.0) || !(self.omega_max > 0.0) {
            return Err(Error::Config("control bounds must be positive".into()));
        }
        if self.restart_sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config("restart perturbation must be finite and nonnegative".into()));
        }
        Ok(())
    }

    fn ascent(&self) -> AscentSettings {
        AscentSettings {
            max_iterations: self.max_iterations,
            grad_tol: self.grad_tol,
            step_tol: self.step_tol,
            ..AscentSettings::default()
        }
    }

    fn bounds(&self, k_len: usize) -> Bounds {
        let mut b = Bounds::uniform(2 * k_len, 0.0, self.v_max);
        for k in 0..k_len {
            b.lower[2 * k + 1] = -self.omega_max;
            b.upper[2 * k + 1] = self.omega_max;
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    /// Projected gradient norm at the result. Optima on the target centerline
    /// sit on the kink of the lateral term, where it stays large.
    pub grad_norm: f64,
    pub reward: f64,
    pub converged: bool,
    pub termination: Termination,
    /// Index of the start that produced the result; 0 is the unperturbed guess.
    pub best_start: usize,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Optimized {
    pub trajectory: Trajectory,
    pub reward: f64,
    pub report: ConvergenceReport,
}

/// Reward `θᵀΦ̂` of `controls` and its gradient with respect to the lifted controls.
fn reward_and_gradient(obj: &Objective<'_>, theta: &[f64], controls: &[Control]) -> Result<(f64, Vec<f64>)> {
    let d = obj.evaluate(controls, Order::Gradient)?;
    let mut grad = alloc::vec![0.0; 2 * controls.len()];
    let mut value = 0.0;
    for (i, &t) in theta.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        value += t * d.values[i];
        for (g, gi) in grad.iter_mut().zip(&d.gradients[i]) {
            *g += t * gi;
        }
    }
    Ok((value, grad))
}

/// Reward of `traj` under `model`, with its gradient over the lifted controls.
pub fn reward_of(
    traj: &Trajectory,
    scenario: &Scenario,
    model: &RewardModel,
    z: Option<&UnpredictabilitySeries>,
) -> Result<(f64, Vec<f64>)> {
    model.validate()?;
    let placed = scenario.with_ego(traj.clone());
    let obj = Objective::new(&placed, z, &model.config, &model.normalization, model.variant)?;
    reward_and_gradient(&obj, &model.theta.values, &traj.controls)
}

/// Locally maximizes the summed reward from the scenario's initial ego state.
pub fn optimize(
    scenario: &Scenario,
    model: &RewardModel,
    z: Option<&UnpredictabilitySeries>,
    settings: &OptimizerSettings,
) -> Result<Optimized> {
    model.validate()?;
    settings.validate()?;
    let obj = Objective::new(scenario, z, &model.config, &model.normalization, model.variant)?;
    let k_len = scenario.horizon();
    let bounds = settings.bounds(k_len);
    let theta = &model.theta.values;

    let base: Vec<f64> = match settings.initial_guess {
        InitialGuess::ObservedSpeed => {
            let v0 = scenario.ego.controls[0].v;
            (0..k_len).flat_map(|_| [v0, 0.0]).collect()
        }
        InitialGuess::Recorded => scenario.ego.lifted_controls(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let nv = Normal::new(0.0, settings.restart_sigma[0]).map_err(|_| Error::Config("bad restart sigma".into()))?;
    let nw = Normal::new(0.0, settings.restart_sigma[1]).map_err(|_| Error::Config("bad restart sigma".into()))?;

    let mut best: Option<(Vec<f64>, AscentReport, usize)> = None;
    for start in 0..=settings.restarts {
        let mut guess = base.clone();
        if start > 0 {
            for (j, u) in guess.iter_mut().enumerate() {
                *u += if j % 2 == 0 { nv.sample(&mut rng) } else { nw.sample(&mut rng) };
            }
        }
        let f = |u: &[f64]| reward_and_gradient(&obj, theta, &controls_from_lifted(u));
        let (u, report) = maximize(f, &guess, &bounds, &settings.ascent())?;
        if best.as_ref().map_or(true, |(_, b, _)| report.value > b.value) {
            best = Some((u, report, start));
        }
    }
    let (u, report, best_start) = best.expect("at least one start");
    let trajectory = Trajectory::from_controls(scenario.ego.x0, controls_from_lifted(&u), scenario.dt())?;
    let reward = report.value;
    Ok(Optimized {
        trajectory,
        reward,
        report: ConvergenceReport {
            iterations: report.iterations,
            grad_norm: report.grad_norm,
            reward,
            converged: report.grad_norm <= settings.grad_tol,
            termination: report.termination,
            best_start,
            history: report.history,
        },
    })
}

/// Norm of the projected reward gradient at `traj`, for stationarity checks.
pub fn stationarity(
    traj: &Trajectory,
    scenario: &Scenario,
    model: &RewardModel,
    z: Option<&UnpredictabilitySeries>,
    settings: &OptimizerSettings,
) -> Result<f64> {
    let (_, g) = reward_of(traj, scenario, model, z)?;
    Ok(norm(&settings.bounds(traj.horizon()).projected_gradient(&traj.lifted_controls(), &g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{step_features, Feature, FeatureConfig, NormalizationConstants, ThetaWeights, Variant};
    use crate::objective::tests::random_scenario;
    use crate::scenario::DT;
    use alloc::vec;

    fn model(theta: ThetaWeights, scenario: &Scenario) -> RewardModel {
        let cfg = FeatureConfig::default();
        let table = step_features(&scenario.ego, scenario, None, &cfg, Variant::Baseline).unwrap();
        let normalization = NormalizationConstants::from_step_tables([table.as_slice()], 5).unwrap();
        RewardModel { variant: theta.variant, theta, config: cfg, normalization }
    }

    fn scenario(seed: u64, k: usize) -> Scenario {
        random_scenario(&mut ChaCha8Rng::seed_from_u64(seed), k)
    }

    #[test]
    fn turn_penalty_alone_straightens() {
        let s = scenario(1, 20);
        let m = model(ThetaWeights::one_hot(Variant::Baseline, Feature::AngularSpeed).unwrap(), &s);
        let out = optimize(&s, &m, None, &OptimizerSettings { grad_tol: 1e-10, ..Default::default() }).unwrap();
        assert!(out.trajectory.controls.iter().all(|c| c.omega.abs() < 1e-9));
        assert!(out.report.grad_norm < 1e-8);
    }

    #[test]
    fn speed_term_alone_tracks_desired_speed() {
        let s = scenario(2, 20);
        let m = model(ThetaWeights::one_hot(Variant::Baseline, Feature::SpeedDeviation).unwrap(), &s);
        let out = optimize(&s, &m, None, &OptimizerSettings::default()).unwrap();
        for c in &out.trajectory.controls {
            assert!((c.v - s.v_d).abs() < 1e-5, "{} vs {}", c.v, s.v_d);
        }
    }

    #[test]
    fn lane_term_moves_toward_target() {
        let s = scenario(3, 40);
        let m = model(ThetaWeights::new(Variant::Baseline, vec![1.0, 0.0, 0.1, 0.0, 0.0]).unwrap(), &s);
        let out = optimize(&s, &m, None, &OptimizerSettings::default()).unwrap();
        let straight =
            Trajectory::from_controls(s.ego.x0, vec![Control::new(s.ego.controls[0].v, 0.0); 40], DT).unwrap();
        let target = &s.lanes.target_line;
        let end = |t: &Trajectory| target.signed_distance(t.states.last().unwrap().position()).abs();
        assert!(end(&out.trajectory) < target.signed_distance(s.ego.x0.position()).abs());
        let phi_d = |t: &Trajectory| -> f64 {
            step_features(t, &s, None, &m.config, Variant::Baseline).unwrap().iter().map(|r| r[0]).sum()
        };
        assert!(phi_d(&out.trajectory) > phi_d(&straight));
        assert!(end(&out.trajectory) < end(&straight));
    }

    #[test]
    fn zero_weights_give_zero_reward() {
        let s = scenario(4, 10);
        let m = model(ThetaWeights::new(Variant::Baseline, vec![0.0; 5]).unwrap(), &s);
        let (v, g) = reward_of(&s.ego, &s, &m, None).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn reward_is_linear_in_theta() {
        let s = scenario(5, 10);
        let a = model(ThetaWeights::new(Variant::Baseline, vec![0.3, 1.0, 0.0, 2.0, 0.5]).unwrap(), &s);
        let b = a.with_theta(ThetaWeights::new(Variant::Baseline, vec![1.1, 0.0, 0.7, 0.2, 0.0]).unwrap());
        let sum = a.with_theta(ThetaWeights::new(Variant::Baseline, vec![1.4, 1.0, 0.7, 2.2, 0.5]).unwrap());
        let (va, ga) = reward_of(&s.ego, &s, &a, None).unwrap();
        let (vb, gb) = reward_of(&s.ego, &s, &b, None).unwrap();
        let (vs, gs) = reward_of(&s.ego, &s, &sum, None).unwrap();
        assert!((va + vb - vs).abs() < 1e-10);
        for i in 0..gs.len() {
            assert!((ga[i] + gb[i] - gs[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let s = scenario(6, 10);
        let m = model(ThetaWeights::new(Variant::Baseline, vec![0.5, 1.0, 0.3, 0.8, 0.6]).unwrap(), &s);
        let (_, g) = reward_of(&s.ego, &s, &m, None).unwrap();
        let u = s.ego.lifted_controls();
        let h = 1e-6;
        for j in 0..u.len() {
            let eval = |d: f64| {
                let mut w = u.clone();
                w[j] += d;
                let t = Trajectory::from_controls(s.ego.x0, controls_from_lifted(&w), DT).unwrap();
                reward_of(&t, &s, &m, None).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-5, "{j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn optimum_is_feasible_and_monotone() {
        let s = scenario(7, 30);
        let m = model(ThetaWeights::new(Variant::Baseline, vec![1.0, 1.0, 0.5, 0.5, 0.5]).unwrap(), &s);
        let out = optimize(&s, &m, None, &OptimizerSettings { restarts: 2, seed: 9, ..Default::default() }).unwrap();
        out.trajectory.validate().unwrap();
        let replay = Trajectory::from_controls(s.ego.x0, out.trajectory.controls.clone(), DT).unwrap();
        for (a, b) in replay.states.iter().zip(&out.trajectory.states) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
        }
        assert!(out.report.history.windows(2).all(|w| w[1] >= w[0]));
        let (v, _) = reward_of(&out.trajectory, &s, &m, None).unwrap();
        assert!((v - out.reward).abs() < 1e-9);
    }

    #[test]
    fn scaling_theta_keeps_stationarity() {
        let s = scenario(8, 20);
        let m = model(ThetaWeights::new(Variant::Baseline, vec![0.0, 1.0, 0.5, 0.5, 0.5]).unwrap(), &s);
        let settings = OptimizerSettings::default();
        let out = optimize(&s, &m, None, &settings).unwrap();
        let g1 = stationarity(&out.trajectory, &s, &m, None, &settings).unwrap();
        let g3 = stationarity(&out.trajectory, &s, &m.with_theta(m.theta.scaled(3.0)), None, &settings).unwrap();
        assert!(g1 <= settings.grad_tol, "{g1}");
        assert!((g3 - 3.0 * g1).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_settings() {
        let s = scenario(9, 5);
        let m = model(ThetaWeights::new(Variant::Baseline, vec![1.0; 5]).unwrap(), &s);
        let bad = OptimizerSettings { max_iterations: 0, ..Default::default() };
        assert!(matches!(optimize(&s, &m, None, &bad), Err(Error::Config(_))));
    }
}
