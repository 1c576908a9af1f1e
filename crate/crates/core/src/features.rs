//! Lane-change reward features and the linear reward.
//!
//! Every per-step feature is a penalty (`≤ 0`). The formulas are generic over
//! [`Real`] so the same code yields values and exact local derivatives with
//! respect to `(x, y, ψ, v, ω)`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Real;
use crate::prediction::UnpredictabilitySeries;
use crate::scenario::{AdjacentRole, Scenario, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Angular decay of the preceding-vehicle gate.
    pub c: f64,
    /// Preceding time-to-collision scale (s).
    pub t_p: f64,
    /// Following time-to-collision scale (s).
    pub t_f: f64,
    /// Unpredictability gain, preceding vehicles.
    pub c_p: f64,
    /// Unpredictability gain, following vehicle.
    pub c_f: f64,
    /// Floor on speeds in denominators (m/s).
    pub v_eps: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { c: 1.0, t_p: 2.0, t_f: 2.0, c_p: 10.0, c_f: 10.0, v_eps: 0.1 }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t_p > 0.0
            && self.t_f > 0.0
            && self.c >= 0.0
            && self.c_p >= 0.0
            && self.c_f >= 0.0
            && self.v_eps > 0.0
            && [self.c, self.t_p, self.t_f, self.c_p, self.c_f, self.v_eps].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid feature config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    LateralDeviation,
    SpeedDeviation,
    AngularSpeed,
    PrecedingTtc,
    FollowingTtc,
    PrecedingTtcUnpredictable,
    FollowingTtcUnpredictable,
}

impl Feature {
    pub fn short_name(self) -> &'static str {
        match self {
            Feature::LateralDeviation => "d",
            Feature::SpeedDeviation => "v",
            Feature::AngularSpeed => "a",
            Feature::PrecedingTtc => "p",
            Feature::FollowingTtc => "f",
            Feature::PrecedingTtcUnpredictable => "pz",
            Feature::FollowingTtcUnpredictable => "fz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Five features: `d, v, a, p, f`.
    Baseline,
    /// Seven features: the baseline plus `pz, fz`.
    Unpred,
}

const BASELINE: [Feature; 5] = [
    Feature::LateralDeviation,
    Feature::SpeedDeviation,
    Feature::AngularSpeed,
    Feature::PrecedingTtc,
    Feature::FollowingTtc,
];

const UNPRED: [Feature; 7] = [
    Feature::LateralDeviation,
    Feature::SpeedDeviation,
    Feature::AngularSpeed,
    Feature::PrecedingTtc,
    Feature::FollowingTtc,
    Feature::PrecedingTtcUnpredictable,
    Feature::FollowingTtcUnpredictable,
];

impl Variant {
    pub fn features(self) -> &'static [Feature] {
        match self {
            Variant::Baseline => &BASELINE,
            Variant::Unpred => &UNPRED,
        }
    }

    pub fn len(self) -> usize {
        self.features().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Unpred => "unpred",
        }
    }

    pub fn needs_unpredictability(self) -> bool {
        matches!(self, Variant::Unpred)
    }
}

/// Everything a per-step feature reads besides the ego state and control.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub scenario: &'a Scenario,
    pub z: Option<&'a UnpredictabilitySeries>,
    pub cfg: &'a FeatureConfig,
    pub k: usize,
}

/// Ego variables at one step, in the local derivative order `(x, y, ψ, v, ω)`.
#[derive(Clone, Copy)]
pub struct StepVars<T> {
    pub x: T,
    pub y: T,
    pub psi: T,
    pub v: T,
    pub omega: T,
}

/// `-exp(d / w)` with `d` the distance to the target centerline.
pub fn phi_d<T: Real>(s: &StepVars<T>, ctx: &StepContext<'_>) -> T {
    let lanes = &ctx.scenario.lanes;
    let d = signed_target_offset(s, ctx).abs();
    -(d / lanes.w).exp()
}

/// `-(v - v_d)²`.
pub fn phi_v<T: Real>(s: &StepVars<T>, v_d: f64) -> T {
    -(s.v - v_d).square()
}

/// `-ω²`.
pub fn phi_a<T: Real>(s: &StepVars<T>) -> T {
    -s.omega.square()
}

/// Time-to-collision penalty against both preceding cars.
pub fn phi_p<T: Real>(s: &StepVars<T>, ctx: &StepContext<'_>) -> T {
    preceding(s, ctx, false)
}

/// Time-to-collision penalty against the follower in the target lane, active
/// while the ego is away from the target centerline.
pub fn phi_f<T: Real>(s: &StepVars<T>, ctx: &StepContext<'_>) -> T {
    following(s, ctx, false)
}

/// [`phi_p`] with the squared distance reduced by `c_p z²`.
pub fn phi_pz<T: Real>(s: &StepVars<T>, ctx: &StepContext<'_>) -> T {
    preceding(s, ctx, true)
}

/// [`phi_f`] with the squared distance reduced by `c_f z²`.
pub fn phi_fz<T: Real>(s: &StepVars<T>, ctx: &StepContext<'_>) -> T {
    following(s, ctx, true)
}

pub fn eval_feature<T: Real>(feature: Feature, s: &StepVars<T>, ctx: &StepContext<'_>) -> T {
    match feature {
        Feature::LateralDeviation => phi_d(s, ctx),
        Feature::SpeedDeviation => phi_v(s, ctx.scenario.v_d),
        Feature::AngularSpeed => phi_a(s),
        Feature::PrecedingTtc => phi_p(s, ctx),
        Feature::FollowingTtc => phi_f(s, ctx),
        Feature::PrecedingTtcUnpredictable => phi_pz(s, ctx),
        Feature::FollowingTtcUnpredictable => phi_fz(s, ctx),
    }
}

fn signed_target_offset<T: Real>(s: &StepVars<T>, ctx: &StepContext<'_>) -> T {
    let line = &ctx.scenario.lanes.target_line;
    let n = line.normal();
    (s.x - line.point[0]) * n[0] + (s.y - line.point[1]) * n[1]
}

fn floored<T: Real>(v: T, eps: f64) -> T {
    if v.value() < eps {
        T::constant(eps)
    } else {
        v
    }
}

fn z_at(ctx: &StepContext<'_>, role: AdjacentRole) -> f64 {
    ctx.z.map_or(0.0, |z| z.of(role)[ctx.k])
}

/// `h1(α) = exp(-c |α|)` for `|α| ≤ π/2`, else 0, with `α` the angle between
/// the ego heading and the offset to the other car.
fn heading_gate<T: Real>(s: &StepVars<T>, dx: T, dy: T, c: f64) -> Option<T> {
    let (cos, sin) = (s.psi.cos(), s.psi.sin());
    let along = cos * dx + sin * dy;
    let across = cos * dy - sin * dx;
    let (a, b) = (along.value(), across.value());
    if a < 0.0 {
        None
    } else if a == 0.0 {
        let alpha = if b == 0.0 { 0.0 } else { FRAC_PI_2 };
        Some(T::constant(num_traits::Float::exp(-c * alpha)))
    } else {
        let alpha = (across / along).atan().abs();
        Some((alpha * -c).exp())
    }
}

fn preceding<T: Real>(s: &StepVars<T>, ctx: &StepContext<'_>, weighted: bool) -> T {
    let cfg = ctx.cfg;
    let speed = floored(s.v, cfg.v_eps);
    let denom = speed.square() * (cfg.t_p * cfg.t_p);
    let mut total = T::constant(0.0);
    for role in [AdjacentRole::PrecedingCurrent, AdjacentRole::PrecedingTarget] {
        let track = ctx.scenario.track(role);
        if !track.present[ctx.k] {
            continue;
        }
        let [ox, oy] = track.positions[ctx.k];
        let dx = -s.x + ox;
        let dy = -s.y + oy;
        let Some(gate) = heading_gate(s, dx, dy, cfg.c) else {
            continue;
        };
        let mut num = dx.square() + dy.square();
        if weighted {
            let z = z_at(ctx, role);
            num = num - cfg.c_p * z * z;
        }
        total = total + gate * (-(num / denom)).exp();
    }
    -total
}

fn following<T: Real>(s: &StepVars<T>, ctx: &StepContext<'_>, weighted: bool) -> T {
    let cfg = ctx.cfg;
    let role = AdjacentRole::FollowingTarget;
    let track = ctx.scenario.track(role);
    if !track.present[ctx.k] {
        return T::constant(0.0);
    }
    let w = ctx.scenario.lanes.w;
    let d = signed_target_offset(s, ctx);
    let gate = d.square() / (w * w);
    let [ox, oy] = track.positions[ctx.k];
    let dx = -s.x + ox;
    let dy = -s.y + oy;
    let mut num = dx.square() + dy.square();
    if weighted {
        let z = z_at(ctx, role);
        num = num - cfg.c_f * z * z;
    }
    let vf = num_traits::Float::max(track.speeds[ctx.k], cfg.v_eps);
    -(gate * (-(num / (vf * vf * cfg.t_f * cfg.t_f))).exp())
}

/// Per-step raw feature values of `traj` in `scenario`, `out[k][i]` for the
/// `i`-th feature of `variant`.
pub fn step_features(
    traj: &Trajectory,
    scenario: &Scenario,
    z: Option<&UnpredictabilitySeries>,
    cfg: &FeatureConfig,
    variant: Variant,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(traj, scenario, z, variant)?;
    let mut out = Vec::with_capacity(traj.horizon());
    for k in 0..traj.horizon() {
        let st = traj.state_before(k);
        let u = traj.controls[k];
        let vars = StepVars { x: st.x, y: st.y, psi: st.psi, v: u.v, omega: u.omega };
        let ctx = StepContext { scenario, z, cfg, k };
        let row: Vec<f64> = variant.features().iter().map(|&f| eval_feature(f, &vars, &ctx)).collect();
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                feature: Some(variant.features()[i].short_name()),
                step: Some(k),
                context: "feature evaluation".into(),
            });
        }
        out.push(row);
    }
    Ok(out)
}

pub(crate) fn check_inputs(
    traj: &Trajectory,
    scenario: &Scenario,
    z: Option<&UnpredictabilitySeries>,
    variant: Variant,
) -> Result<()> {
    let k = traj.horizon();
    if k != scenario.horizon() {
        return Err(Error::Shape(format!(
            "trajectory horizon {k} differs from scenario horizon {}",
            scenario.horizon()
        )));
    }
    if variant.needs_unpredictability() {
        let z = z.ok_or_else(|| Error::Config("unpredictability variant needs a z-series".into()))?;
        if z.z.iter().any(|s| s.len() != k) {
            return Err(Error::Shape("z-series length differs from horizon".into()));
        }
    }
    Ok(())
}

/// Raw feature sums `Φ_i = Σ_k φ_i` over the horizon.
pub fn feature_sums(
    traj: &Trajectory,
    scenario: &Scenario,
    z: Option<&UnpredictabilitySeries>,
    cfg: &FeatureConfig,
    variant: Variant,
) -> Result<Vec<f64>> {
    let steps = step_features(traj, scenario, z, cfg, variant)?;
    let mut sums = alloc::vec![0.0; variant.len()];
    for row in &steps {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    Ok(sums)
}

/// Per-feature min and max of per-step values over a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConstants {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationConstants {
    /// Identity scaling (`min = 0`, `max = 1`).
    pub fn identity(n: usize) -> Self {
        Self { min: alloc::vec![0.0; n], max: alloc::vec![1.0; n] }
    }

    /// Accumulates min/max over every row of every table.
    pub fn from_step_tables<'a>(tables: impl IntoIterator<Item = &'a [Vec<f64>]>, n: usize) -> Result<Self> {
        let mut min = alloc::vec![f64::INFINITY; n];
        let mut max = alloc::vec![f64::NEG_INFINITY; n];
        for table in tables {
            for row in table {
                for i in 0..n {
                    min[i] = min[i].min(row[i]);
                    max[i] = max[i].max(row[i]);
                }
            }
        }
        if min.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("normalization needs at least one step".into()));
        }
        Ok(Self { min, max })
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    /// `1 / (max - min)`, or 0 for a degenerate range.
    pub fn scale(&self, i: usize) -> f64 {
        let range = self.max[i] - self.min[i];
        if range > 0.0 {
            1.0 / range
        } else {
            0.0
        }
    }

    pub fn apply(&self, i: usize, value: f64) -> f64 {
        (value - self.min[i]) * self.scale(i)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.min.len() != n || self.max.len() != n {
            return Err(Error::Shape(format!("normalization has {} entries, expected {n}", self.min.len())));
        }
        for i in 0..n {
            if !(self.max[i] >= self.min[i]) || !self.min[i].is_finite() || !self.max[i].is_finite() {
                return Err(Error::Config(format!("normalization entry {i} has max < min")));
            }
        }
        Ok(())
    }
}

/// Min-max normalizes one row of per-step values.
pub fn normalize(values: &[f64], constants: &NormalizationConstants) -> Vec<f64> {
    values.iter().enumerate().map(|(i, &v)| constants.apply(i, v)).collect()
}

/// `θᵀφ`.
pub fn reward(features: &[f64], theta: &ThetaWeights) -> f64 {
    theta.values.iter().zip(features).map(|(t, f)| t * f).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaWeights {
    pub variant: Variant,
    pub values: Vec<f64>,
}

impl ThetaWeights {
    pub fn new(variant: Variant, values: Vec<f64>) -> Result<Self> {
        let t = Self { variant, values };
        t.validate()?;
        Ok(t)
    }

    pub fn one_hot(variant: Variant, feature: Feature) -> Result<Self> {
        let i = variant
            .features()
            .iter()
            .position(|&f| f == feature)
            .ok_or_else(|| Error::Config(format!("feature {feature:?} not in {} variant", variant.name())))?;
        let mut values = alloc::vec![0.0; variant.len()];
        values[i] = 1.0;
        Ok(Self { variant, values })
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.variant.len() {
            return Err(Error::Shape(format!(
                "{} weights for the {}-feature {} variant",
                self.values.len(),
                self.variant.len(),
                self.variant.name()
            )));
        }
        if self.values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("weights must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Pads baseline weights with zeros for the unpredictability features.
    pub fn extended(&self) -> Self {
        let mut values = self.values.clone();
        values.resize(Variant::Unpred.len(), 0.0);
        Self { variant: Variant::Unpred, values }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { variant: self.variant, values: self.values.iter().map(|v| v * s).collect() }
    }
}

/// A trained reward: weights plus the scaling they were learned under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub variant: Variant,
    pub theta: ThetaWeights,
    pub config: FeatureConfig,
    pub normalization: NormalizationConstants,
}

impl RewardModel {
    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        if self.theta.variant != self.variant {
            return Err(Error::Config("weight variant differs from model variant".into()));
        }
        self.config.validate()?;
        self.normalization.validate(self.variant.len())
    }

    pub fn with_theta(&self, theta: ThetaWeights) -> Self {
        Self { variant: theta.variant, theta, ..self.clone() }
    }
}
