//! Laplace-approximated maximum-entropy IRL.
//!
//! Around a demonstration the summed reward is expanded to second order in
//! the lifted controls, which makes the partition function Gaussian:
//!
//! ```text
//! ℒ(θ) = ½ gᵀH⁻¹g + ½ log|−H| − (d_u/2) log 2π
//! ```
//!
//! with `g`, `H` the reward gradient and Hessian at the expert controls. Both
//! are linear in θ, so the per-feature derivatives are computed once per
//! demonstration and the ascent over θ only assembles and factors.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{avg_mee, MeanStd};
use crate::features::{step_features, FeatureConfig, NormalizationConstants, RewardModel, ThetaWeights, Variant};
use crate::linalg::{cholesky, cholesky_inverse, cholesky_log_det, cholesky_solve, dot, norm, Matrix};
use crate::objective::{Objective, Order};
use crate::optim::{maximize, AscentSettings, Bounds, Termination};
use crate::prediction::UnpredictabilitySeries;
use crate::scenario::Scenario;
use crate::trajopt::{optimize, OptimizerSettings};

/// Diagonal shifts tried, in order, until `−(H − λI)` factors.
pub const REGULARIZATION_LADDER: [f64; 6] = [0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0];

/// An expert scenario with the unpredictability series its features need.
#[derive(Debug, Clone)]
pub struct Demonstration {
    pub scenario: Scenario,
    pub z: Option<UnpredictabilitySeries>,
}

/// `∂Φ̂_i/∂u` and `∂²Φ̂_i/∂u²` at the expert controls, per feature.
#[derive(Debug, Clone)]
pub struct PerFeatureDerivatives {
    pub variant: Variant,
    pub values: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<Matrix>,
}

impl PerFeatureDerivatives {
    pub fn dim(&self) -> usize {
        self.g.first().map_or(0, Vec::len)
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.g.len() {
            return Err(Error::Shape(alloc::format!("{} weights for {} features", theta.len(), self.g.len())));
        }
        if let Some(&t) = theta.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidValue { what: "weight", value: t });
        }
        Ok(())
    }

    /// `g(θ) = Σ θ_i g_i`.
    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for (t, gi) in theta.iter().zip(&self.g) {
            if *t != 0.0 {
                for (a, b) in g.iter_mut().zip(gi) {
                    *a += t * b;
                }
            }
        }
        g
    }

    /// `H(θ) = Σ θ_i H_i`.
    pub fn hessian(&self, theta: &[f64]) -> Matrix {
        let n = self.dim();
        let mut h = Matrix::zeros(n, n);
        for (t, hi) in theta.iter().zip(&self.h) {
            if *t != 0.0 {
                h.add_scaled(*t, hi);
            }
        }
        h
    }
}

pub fn per_feature_derivatives(
    scenario: &Scenario,
    z: Option<&UnpredictabilitySeries>,
    cfg: &FeatureConfig,
    norm: &NormalizationConstants,
    variant: Variant,
) -> Result<PerFeatureDerivatives> {
    scenario.ego.validate()?;
    let obj = Objective::new(scenario, z, cfg, norm, variant)?;
    let d = obj.evaluate(&scenario.ego.controls, Order::Hessian)?;
    Ok(PerFeatureDerivatives { variant, values: d.values, g: d.gradients, h: d.hessians })
}

#[derive(Debug, Clone)]
pub struct LikelihoodParts {
    pub g: Vec<f64>,
    pub h: Matrix,
    /// Lower Cholesky factor of `−(H − λI)`.
    pub l: Matrix,
    pub lambda: f64,
    pub loglik: f64,
}

/// Factors `−(H − λI)` with the smallest λ on the ladder that succeeds.
pub fn regularized_cholesky(h: &Matrix) -> Result<(Matrix, f64)> {
    let n = h.rows();
    for &lambda in &REGULARIZATION_LADDER {
        let mut neg = h.scaled(-1.0);
        for i in 0..n {
            neg[(i, i)] += lambda;
        }
        if let Some(l) = cholesky(&neg) {
            return Ok((l, lambda));
        }
    }
    Err(Error::NotPositiveDefinite { lambdas: REGULARIZATION_LADDER.to_vec() })
}

/// Approximate log-likelihood of the demonstration under weights `theta`.
pub fn log_likelihood(parts: &PerFeatureDerivatives, theta: &[f64]) -> Result<LikelihoodParts> {
    parts.check_theta(theta)?;
    let g = parts.gradient(theta);
    let h = parts.hessian(theta);
    let (l, lambda) = regularized_cholesky(&h)?;
    // H_reg⁻¹ = −(L Lᵀ)⁻¹
    let quad = -dot(&g, &cholesky_solve(&l, &g));
    let n = g.len() as f64;
    let loglik = 0.5 * quad + 0.5 * cholesky_log_det(&l) - 0.5 * n * (2.0 * PI).ln();
    if !loglik.is_finite() {
        return Err(Error::NonFinite { feature: None, step: None, context: "log-likelihood".into() });
    }
    Ok(LikelihoodParts { g, h, l, lambda, loglik })
}

/// `∂ℒ/∂θ_j = g_jᵀy − ½ yᵀH_j y + ½ tr(H_reg⁻¹H_j)` with `y = H_reg⁻¹g`.
pub fn log_likelihood_grad(parts: &PerFeatureDerivatives, theta: &[f64]) -> Result<Vec<f64>> {
    Ok(value_and_grad(parts, theta)?.1)
}

fn value_and_grad(parts: &PerFeatureDerivatives, theta: &[f64]) -> Result<(LikelihoodParts, Vec<f64>)> {
    let lp = log_likelihood(parts, theta)?;
    let y: Vec<f64> = cholesky_solve(&lp.l, &lp.g).into_iter().map(|v| -v).collect();
    let neg_inv = cholesky_inverse(&lp.l);
    let n = lp.g.len();
    let grad = parts
        .g
        .iter()
        .zip(&parts.h)
        .map(|(gj, hj)| {
            let hy = hj.matvec(&y);
            let mut trace = 0.0;
            for a in 0..n {
                trace -= dot(neg_inv.row(a), hj.row(a));
            }
            dot(gj, &y) - 0.5 * dot(&y, &hy) + 0.5 * trace
        })
        .collect();
    Ok((lp, grad))
}

/// Min-max constants over every step of every demonstration.
pub fn training_normalization(
    demos: &[Demonstration],
    cfg: &FeatureConfig,
    variant: Variant,
) -> Result<NormalizationConstants> {
    let tables = demos
        .iter()
        .map(|d| step_features(&d.scenario.ego, &d.scenario, d.z.as_ref(), cfg, variant))
        .collect::<Result<Vec<_>>>()?;
    NormalizationConstants::from_step_tables(tables.iter().map(Vec::as_slice), variant.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    /// Box `0 ≤ θ_i ≤ theta_max`. The likelihood of noiseless demonstrations
    /// grows without bound along the generating direction, so it must be finite.
    pub theta_max: f64,
    pub theta_init: f64,
    pub seed: u64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { max_iterations: 300, grad_tol: 1e-6, step_tol: 1e-10, theta_max: 100.0, theta_init: 1.0, seed: 0 }
    }
}

impl FitSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_max > 0.0) || !self.theta_max.is_finite() {
            return Err(Error::Config("theta_max must be positive and finite".into()));
        }
        if !(self.theta_init > 0.0) || self.theta_init > self.theta_max {
            return Err(Error::Config("theta_init must lie in (0, theta_max]".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.step_tol > 0.0) {
            return Err(Error::Config("fit tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaEvent {
    pub evaluation: usize,
    pub scenario: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub iterations: usize,
    pub loglik: f64,
    pub grad_norm: f64,
    pub termination: Termination,
    pub loglik_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
    /// Evaluations where some demonstration needed a nonzero diagonal shift.
    pub lambda_events: Vec<LambdaEvent>,
    pub theta_init: Vec<f64>,
    pub seed: u64,
    pub demonstrations: usize,
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: RewardModel,
    pub report: TrainingReport,
}

/// Summed log-likelihood over cached demonstrations and its θ-gradient.
pub fn dataset_log_likelihood(parts: &[PerFeatureDerivatives], theta: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut total = 0.0;
    let mut grad = vec![0.0; theta.len()];
    let mut lambdas = Vec::with_capacity(parts.len());
    for p in parts {
        let (lp, g) = value_and_grad(p, theta)?;
        total += lp.loglik;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        lambdas.push(lp.lambda);
    }
    Ok((total, grad, lambdas))
}

/// Maximizes the summed likelihood over `0 ≤ θ ≤ theta_max` from cached derivatives.
pub fn fit_from_parts(
    parts: &[PerFeatureDerivatives],
    variant: Variant,
    settings: &FitSettings,
) -> Result<(Vec<f64>, TrainingReport)> {
    settings.validate()?;
    if parts.is_empty() {
        return Err(Error::Config("fitting needs at least one demonstration".into()));
    }
    if parts.iter().any(|p| p.variant != variant) {
        return Err(Error::Config("cached derivatives were computed for another variant".into()));
    }
    let p = variant.len();
    let bounds = Bounds::uniform(p, 0.0, settings.theta_max);
    let mut init = vec![settings.theta_init; p];
    // Shrink the start until every demonstration has a finite likelihood.
    let mut attempts = 0;
    while dataset_log_likelihood(parts, &init).is_err() {
        attempts += 1;
        if attempts > 20 {
            return Err(Error::Divergence { iteration: 0, trace: Vec::new() });
        }
        init.iter_mut().for_each(|t| *t *= 0.5);
    }

    let mut events = Vec::new();
    let mut evaluation = 0;
    let f = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        evaluation += 1;
        match dataset_log_likelihood(parts, theta) {
            Ok((v, g, lambdas)) => {
                for (scenario, &lambda) in lambdas.iter().enumerate() {
                    if lambda > 0.0 {
                        events.push(LambdaEvent { evaluation, scenario, lambda });
                    }
                }
                Ok((v, g))
            }
            Err(Error::NotPositiveDefinite { .. }) => Ok((f64::NEG_INFINITY, vec![0.0; theta.len()])),
            Err(Error::NonFinite { .. }) => Ok((f64::NAN, vec![f64::NAN; theta.len()])),
            Err(e) => Err(e),
        }
    };
    let ascent = AscentSettings {
        max_iterations: settings.max_iterations,
        grad_tol: settings.grad_tol,
        step_tol: settings.step_tol,
        ..AscentSettings::default()
    };
    let (theta, report) = if settings.max_iterations == 0 {
        // The ascent still evaluates the start; keep the initialization untouched.
        let mut f = f;
        let (v, g) = f(&init)?;
        let pg = norm(&bounds.projected_gradient(&init, &g));
        (
            init.clone(),
            crate::optim::AscentReport {
                iterations: 0,
                value: v,
                grad_norm: pg,
                termination: Termination::IterationLimit,
                history: vec![v],
                grad_history: vec![pg],
            },
        )
    } else {
        maximize(f, &init, &bounds, &ascent)?
    };
    Ok((
        theta,
        TrainingReport {
            iterations: report.iterations,
            loglik: report.value,
            grad_norm: report.grad_norm,
            termination: report.termination,
            loglik_history: report.history,
            grad_norm_history: report.grad_history,
            lambda_events: events,
            theta_init: init,
            seed: settings.seed,
            demonstrations: parts.len(),
        },
    ))
}

/// Learns reward weights from demonstrations: normalization, cached
/// derivatives, then bound-constrained likelihood ascent.
pub fn fit(demos: &[Demonstration], variant: Variant, cfg: &FeatureConfig, settings: &FitSettings) -> Result<Fitted> {
    if demos.is_empty() {
        return Err(Error::Config("fitting needs at least one demonstration".into()));
    }
    let normalization = training_normalization(demos, cfg, variant)?;
    let parts = demos
        .iter()
        .map(|d| per_feature_derivatives(&d.scenario, d.z.as_ref(), cfg, &normalization, variant))
        .collect::<Result<Vec<_>>>()?;
    let (theta, report) = fit_from_parts(&parts, variant, settings)?;
    let model = RewardModel { variant, theta: ThetaWeights::new(variant, theta)?, config: *cfg, normalization };
    Ok(Fitted { model, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub config: FeatureConfig,
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub mee: MeanStd,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub best: usize,
    pub model: RewardModel,
    pub report: TrainingReport,
    pub points: Vec<SweepPoint>,
}

/// Index of the best point: lowest Average MEE, then smallest `c_p + c_f`,
/// then earliest in the grid.
pub fn select_best(points: &[SweepPoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let q = &points[b];
                p.mee.mean < q.mee.mean
                    || (p.mee.mean == q.mee.mean && p.config.c_p + p.config.c_f < q.config.c_p + q.config.c_f)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Fits θ for every grid point and keeps the one whose regenerated training
/// trajectories are closest to the demonstrations.
pub fn hyperparameter_sweep(
    demos: &[Demonstration],
    variant: Variant,
    grid: &[FeatureConfig],
    fit_settings: &FitSettings,
    opt_settings: &OptimizerSettings,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut fits = Vec::with_capacity(grid.len());
    for cfg in grid {
        let fitted = fit(demos, variant, cfg, fit_settings)?;
        let mee = training_mee(demos, &fitted.model, opt_settings)?;
        points.push(SweepPoint {
            config: *cfg,
            theta: fitted.model.theta.values.clone(),
            loglik: fitted.report.loglik,
            mee,
        });
        fits.push(fitted);
    }
    let best = select_best(&points).expect("non-empty grid");
    let Fitted { model, report } = fits.swap_remove(best);
    Ok(SweepResult { best, model, report, points })
}

/// Average MEE of trajectories regenerated under `model` against the demonstrations.
pub fn training_mee(demos: &[Demonstration], model: &RewardModel, opt_settings: &OptimizerSettings) -> Result<MeanStd> {
    let generated = demos
        .iter()
        .map(|d| optimize(&d.scenario, model, d.z.as_ref(), opt_settings).map(|o| o.trajectory))
        .collect::<Result<Vec<_>>>()?;
    avg_mee(generated.iter().zip(demos.iter().map(|d| &d.scenario.ego)))
}

/// Describes a grid point for logs.
pub fn describe(cfg: &FeatureConfig) -> String {
    alloc::format!("c={} t_p={} t_f={} c_p={} c_f={}", cfg.c, cfg.t_p, cfg.t_f, cfg.c_p, cfg.c_f)
}
