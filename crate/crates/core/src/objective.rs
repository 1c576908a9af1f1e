//! Normalized feature sums and their exact first and second derivatives with
//! respect to the lifted control vector `[v_0, ω_0, …, v_{K-1}, ω_{K-1}]`.
//!
//! Each step's feature is differentiated locally in `(x, y, ψ, v, ω)` with
//! [`Jet`]; the result is pushed through the unicycle rollout with the chain
//! rule. Positions are bilinear in speeds and trigonometric in headings, and
//! headings are linear in the turn rates, so the rollout's second derivatives
//! collapse into suffix sums.

use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::unwrapped_headings;
use crate::error::{Error, Result};
use crate::features::{
    check_inputs, eval_feature, FeatureConfig, NormalizationConstants, StepContext, StepVars, Variant,
};
use crate::jet::{Jet, LOCAL_DIM};
use crate::linalg::Matrix;
use crate::prediction::UnpredictabilitySeries;
use crate::scenario::{Control, Scenario, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

/// Normalized sums with optional derivatives, one entry per feature.
#[derive(Debug, Clone)]
pub struct FeatureDerivatives {
    pub values: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
    pub hessians: Vec<Matrix>,
}

/// Inputs that stay fixed while the ego controls vary.
#[derive(Clone, Copy)]
pub struct Objective<'a> {
    pub scenario: &'a Scenario,
    pub z: Option<&'a UnpredictabilitySeries>,
    pub cfg: &'a FeatureConfig,
    pub norm: &'a NormalizationConstants,
    pub variant: Variant,
}

impl<'a> Objective<'a> {
    pub fn new(
        scenario: &'a Scenario,
        z: Option<&'a UnpredictabilitySeries>,
        cfg: &'a FeatureConfig,
        norm: &'a NormalizationConstants,
        variant: Variant,
    ) -> Result<Self> {
        check_inputs(&scenario.ego, scenario, z, variant)?;
        cfg.validate()?;
        norm.validate(variant.len())?;
        Ok(Self { scenario, z, cfg, norm, variant })
    }

    pub fn x0(&self) -> State {
        self.scenario.ego.x0
    }

    pub fn dt(&self) -> f64 {
        self.scenario.dt()
    }

    /// Normalized feature sums at `controls`, with derivatives up to `order`.
    pub fn evaluate(&self, controls: &[Control], order: Order) -> Result<FeatureDerivatives> {
        let k_len = controls.len();
        if k_len != self.scenario.horizon() {
            return Err(Error::Shape(alloc::format!("{k_len} controls for a horizon of {}", self.scenario.horizon())));
        }
        let n = 2 * k_len;
        let p = self.variant.len();
        let dt = self.dt();
        let x0 = self.x0();
        let features = self.variant.features();
        let psi = unwrapped_headings(x0, controls, dt);

        let mut values = vec![0.0; p];
        let mut gradients = if order == Order::Value { Vec::new() } else { vec![vec![0.0; n]; p] };
        let mut hessians = if order == Order::Hessian { vec![Matrix::zeros(n, n); p] } else { Vec::new() };
        // Per-feature position sensitivities ∂f_k/∂x_k and ∂f_k/∂y_k, kept for
        // the rollout curvature term.
        let mut wx = vec![vec![0.0; k_len]; p];
        let mut wy = vec![vec![0.0; k_len]; p];

        // Running Jacobian rows of the position of x_k.
        let mut jx = vec![0.0; n];
        let mut jy = vec![0.0; n];
        let (mut px, mut py) = (x0.x, x0.y);

        for k in 0..k_len {
            let u = controls[k];
            let ctx = StepContext { scenario: self.scenario, z: self.z, cfg: self.cfg, k };
            let active = 2 * k + 2;
            // Columns 0..active of the 5 × n local Jacobian J_k.
            let local_jac = |r: usize, col: usize| -> f64 {
                match r {
                    0 => jx[col],
                    1 => jy[col],
                    2 => {
                        if col % 2 == 1 && col / 2 < k {
                            dt
                        } else {
                            0.0
                        }
                    }
                    3 => f64::from(col == 2 * k),
                    _ => f64::from(col == 2 * k + 1),
                }
            };

            for (i, &feature) in features.iter().enumerate() {
                let scale = self.norm.scale(i);
                if order == Order::Value {
                    let vars = StepVars { x: px, y: py, psi: psi[k], v: u.v, omega: u.omega };
                    let v: f64 = eval_feature(feature, &vars, &ctx);
                    check_finite(v, feature.short_name(), k)?;
                    values[i] += self.norm.apply(i, v);
                    continue;
                }
                let vars = StepVars {
                    x: Jet::variable(px, 0),
                    y: Jet::variable(py, 1),
                    psi: Jet::variable(psi[k], 2),
                    v: Jet::variable(u.v, 3),
                    omega: Jet::variable(u.omega, 4),
                };
                let jet: Jet = eval_feature(feature, &vars, &ctx);
                check_finite(jet.v, feature.short_name(), k)?;
                values[i] += self.norm.apply(i, jet.v);
                if scale == 0.0 {
                    continue;
                }
                let lg: [f64; LOCAL_DIM] = jet.g.map(|g| g * scale);
                if lg.iter().any(|g| !g.is_finite()) {
                    return Err(non_finite(feature.short_name(), k));
                }
                let g = &mut gradients[i];
                for (col, gc) in g.iter_mut().enumerate().take(active) {
                    let mut acc = 0.0;
                    for (r, &l) in lg.iter().enumerate() {
                        if l != 0.0 {
                            acc += l * local_jac(r, col);
                        }
                    }
                    *gc += acc;
                }
                if order == Order::Hessian {
                    wx[i][k] = lg[0];
                    wy[i][k] = lg[1];
                    // M = lh · J_k, then H += J_kᵀ M over the active block.
                    let mut m = vec![[0.0; LOCAL_DIM]; active];
                    let mut any = false;
                    for (col, mc) in m.iter_mut().enumerate() {
                        for r in 0..LOCAL_DIM {
                            let mut acc = 0.0;
                            for s in 0..LOCAL_DIM {
                                let h = jet.h[r][s];
                                if h != 0.0 {
                                    acc += h * local_jac(s, col);
                                }
                            }
                            mc[r] = acc * scale;
                            any |= acc != 0.0;
                        }
                    }
                    if !any {
                        continue;
                    }
                    if m.iter().flatten().any(|v| !v.is_finite()) {
                        return Err(non_finite(feature.short_name(), k));
                    }
                    let jt: Vec<[f64; LOCAL_DIM]> =
                        (0..active).map(|col| core::array::from_fn(|r| local_jac(r, col))).collect();
                    let h = &mut hessians[i];
                    for a in 0..active {
                        let ja = &jt[a];
                        let row = h.row_mut(a);
                        for (b, mb) in m.iter().enumerate() {
                            row[b] += ja[0] * mb[0] + ja[1] * mb[1] + ja[2] * mb[2] + ja[3] * mb[3] + ja[4] * mb[4];
                        }
                    }
                }
            }

            // Advance x_k → x_{k+1} and its Jacobian rows.
            let (s, c) = psi[k].sin_cos();
            for l in 0..k {
                jx[2 * l + 1] -= dt * dt * u.v * s;
                jy[2 * l + 1] += dt * dt * u.v * c;
            }
            jx[2 * k] += dt * c;
            jy[2 * k] += dt * s;
            px += dt * u.v * c;
            py += dt * u.v * s;
        }

        if order == Order::Hessian {
            for i in 0..p {
                add_rollout_curvature(&mut hessians[i], &wx[i], &wy[i], controls, &psi, dt);
            }
        }
        Ok(FeatureDerivatives { values, gradients, hessians })
    }
}

/// Adds `Σ_k (∂f_k/∂x_k) ∇²x_k + (∂f_k/∂y_k) ∇²y_k`.
///
/// With `A_j = Σ_{k>j} ∂f_k/∂x_k` (and `B_j` likewise for `y`):
/// `∂²/∂v_j∂ω_l = dt² (B_j cos ψ_j - A_j sin ψ_j)` for `l < j`, and
/// `∂²/∂ω_l∂ω_m = -dt³ Σ_{j > max(l,m)} v_j (A_j cos ψ_j + B_j sin ψ_j)`.
fn add_rollout_curvature(h: &mut Matrix, wx: &[f64], wy: &[f64], controls: &[Control], psi: &[f64], dt: f64) {
    let k_len = controls.len();
    let mut a = vec![0.0; k_len];
    let mut b = vec![0.0; k_len];
    for j in (0..k_len.saturating_sub(1)).rev() {
        a[j] = a[j + 1] + wx[j + 1];
        b[j] = b[j + 1] + wy[j + 1];
    }
    // c_suffix[m] = Σ_{j>m} v_j (A_j cos ψ_j + B_j sin ψ_j)
    let mut c_suffix = vec![0.0; k_len];
    for m in (0..k_len.saturating_sub(1)).rev() {
        let j = m + 1;
        let (s, c) = psi[j].sin_cos();
        c_suffix[m] = c_suffix[j] + controls[j].v * (a[j] * c + b[j] * s);
    }
    for j in 0..k_len {
        let (s, c) = psi[j].sin_cos();
        let cross = dt * dt * (b[j] * c - a[j] * s);
        if cross != 0.0 {
            for l in 0..j {
                h[(2 * j, 2 * l + 1)] += cross;
                h[(2 * l + 1, 2 * j)] += cross;
            }
        }
    }
    for l in 0..k_len {
        for m in 0..k_len {
            let v = -dt * dt * dt * c_suffix[l.max(m)];
            if v != 0.0 {
                h[(2 * l + 1, 2 * m + 1)] += v;
            }
        }
    }
}

fn check_finite(v: f64, feature: &'static str, k: usize) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(non_finite(feature, k))
    }
}

fn non_finite(feature: &'static str, k: usize) -> Error {
    Error::NonFinite { feature: Some(feature), step: Some(k), context: "feature derivative".into() }
}

/// Unpacks a lifted control vector.
pub fn controls_from_lifted(u: &[f64]) -> Vec<Control> {
    u.chunks_exact(2).map(|c| Control::new(c[0], c[1])).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::features::feature_sums;
    use crate::scenario::{AdjacentRole, AdjacentTrack, LaneGeometry, Line, Trajectory, DT};
    use core::f64::consts::FRAC_PI_2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_scenario(rng: &mut ChaCha8Rng, k_len: usize) -> Scenario {
        let controls: Vec<Control> =
            (0..k_len).map(|_| Control::new(rng.gen_range(8.0..14.0), rng.gen_range(-0.15..0.15))).collect();
        let ego = Trajectory::from_controls(State::new(0.0, 0.0, FRAC_PI_2 + rng.gen_range(-0.1..0.1)), controls, DT)
            .unwrap();
        let w = 3.7;
        let lanes =
            LaneGeometry::new(Line::new([0.0, 0.0], [0.0, 1.0]).unwrap(), Line::new([w, 0.0], [0.02, 1.0]).unwrap(), w)
                .unwrap();
        let adjacent = AdjacentRole::ALL.map(|role| {
            let lane_x =
                if matches!(role, AdjacentRole::PrecedingCurrent | AdjacentRole::FollowingCurrent) { 0.0 } else { w };
            let y0 = if role.is_preceding() { rng.gen_range(6.0..20.0) } else { rng.gen_range(-20.0..-6.0) };
            let speed = rng.gen_range(8.0..14.0);
            AdjacentTrack {
                role,
                vehicle_id: None,
                positions: (0..k_len)
                    .map(|k| [lane_x + rng.gen_range(-0.3..0.3), y0 + speed * DT * k as f64])
                    .collect(),
                speeds: vec![speed; k_len],
                present: vec![true; k_len],
                lead_in: Vec::new(),
            }
        });
        let mut s = Scenario { id: "r".into(), ego, adjacent, lanes, v_d: 0.0, theta_star: None };
        s.v_d = crate::scenario::mean_traffic_speed(&s.adjacent).unwrap();
        s
    }

    pub(crate) fn random_z(rng: &mut ChaCha8Rng, k_len: usize) -> UnpredictabilitySeries {
        let mut z = UnpredictabilitySeries::zeros(k_len, 2);
        for car in 0..4 {
            for k in 2..k_len {
                z.z[car][k] = rng.gen_range(0.0..1.5);
            }
        }
        z
    }

    #[test]
    fn values_match_raw_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_scenario(&mut rng, 10);
        let z = random_z(&mut rng, 10);
        let cfg = FeatureConfig::default();
        let raw = feature_sums(&s.ego, &s, Some(&z), &cfg, Variant::Unpred).unwrap();
        let norm = NormalizationConstants::identity(7);
        let obj = Objective::new(&s, Some(&z), &cfg, &norm, Variant::Unpred).unwrap();
        for order in [Order::Value, Order::Gradient, Order::Hessian] {
            let d = obj.evaluate(&s.ego.controls, order).unwrap();
            for (a, b) in d.values.iter().zip(&raw) {
                assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = FeatureConfig::default();
        for _ in 0..5 {
            let s = random_scenario(&mut rng, 10);
            let z = random_z(&mut rng, 10);
            let norm = NormalizationConstants {
                min: (0..7).map(|_| rng.gen_range(-3.0..-1.0)).collect(),
                max: (0..7).map(|_| rng.gen_range(0.0..1.0)).collect(),
            };
            let obj = Objective::new(&s, Some(&z), &cfg, &norm, Variant::Unpred).unwrap();
            let u0 = s.ego.lifted_controls();
            let d = obj.evaluate(&s.ego.controls, Order::Hessian).unwrap();
            let h = 1e-5;
            for col in 0..u0.len() {
                let mut up = u0.clone();
                let mut dn = u0.clone();
                up[col] += h;
                dn[col] -= h;
                let fp = obj.evaluate(&controls_from_lifted(&up), Order::Gradient).unwrap();
                let fm = obj.evaluate(&controls_from_lifted(&dn), Order::Gradient).unwrap();
                for i in 0..7 {
                    let g_fd = (fp.values[i] - fm.values[i]) / (2.0 * h);
                    assert!((g_fd - d.gradients[i][col]).abs() < 1e-6, "g feature {i} col {col}");
                    for row in 0..u0.len() {
                        let h_fd = (fp.gradients[i][row] - fm.gradients[i][row]) / (2.0 * h);
                        assert!(
                            (h_fd - d.hessians[i][(row, col)]).abs() < 1e-5,
                            "H feature {i} ({row},{col}): {h_fd} vs {}",
                            d.hessians[i][(row, col)]
                        );
                    }
                }
            }
            for hm in &d.hessians {
                assert!(hm.asymmetry() < 1e-10);
            }
        }
    }

    #[test]
    fn angular_speed_hessian_is_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_scenario(&mut rng, 6);
        let cfg = FeatureConfig::default();
        let norm = NormalizationConstants { min: vec![0.0, 0.0, -0.5, 0.0, 0.0], max: vec![1.0, 1.0, 0.0, 1.0, 1.0] };
        let obj = Objective::new(&s, None, &cfg, &norm, Variant::Baseline).unwrap();
        let d = obj.evaluate(&s.ego.controls, Order::Hessian).unwrap();
        let h = &d.hessians[2];
        for r in 0..12 {
            for c in 0..12 {
                let want = if r == c && r % 2 == 1 { -2.0 * 2.0 } else { 0.0 };
                assert!((h[(r, c)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn speed_gradient_vanishes_at_traffic_speed() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = random_scenario(&mut rng, 6);
        let controls: Vec<Control> = s.ego.controls.iter().map(|u| Control::new(s.v_d, u.omega)).collect();
        s.ego = Trajectory::from_controls(s.ego.x0, controls, DT).unwrap();
        let cfg = FeatureConfig::default();
        let norm = NormalizationConstants::identity(5);
        let obj = Objective::new(&s, None, &cfg, &norm, Variant::Baseline).unwrap();
        let d = obj.evaluate(&s.ego.controls, Order::Gradient).unwrap();
        for k in 0..6 {
            assert_eq!(d.gradients[1][2 * k], 0.0);
        }
    }
}
