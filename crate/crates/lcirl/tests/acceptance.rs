//! Acceptance criteria, one line each. Exits nonzero if any fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lcirl::tables::{parse_tracks, write_tracks, Schema, Units};
use lcirl_core::dynamics::{rollout, rollout_sensitivity};
use lcirl_core::eval::{avg_mee, improvement, min_distance};
use lcirl_core::features::{FeatureConfig, NormalizationConstants, RewardModel, ThetaWeights, Variant};
use lcirl_core::ingest::{extract_from_raw, ExtractSettings};
use lcirl_core::irl::{fit, log_likelihood, log_likelihood_grad, per_feature_derivatives, Demonstration, FitSettings};
use lcirl_core::linalg::Matrix;
use lcirl_core::objective::{controls_from_lifted, Objective, Order};
use lcirl_core::prediction::{
    scenario_unpredictability, unpredictability, ConstantVelocity, PredictionTrace, UnpredictabilitySeries,
    DEFAULT_LOOKBACK,
};
use lcirl_core::scenario::{
    mean_traffic_speed, AdjacentRole, AdjacentTrack, Control, LaneGeometry, Line, Scenario, State, Trajectory, DT,
};
use lcirl_core::synth::{make_expert, make_recording, make_scene, varied_spec, zigzag_spec, CarSpec, RecordingSpec};
use lcirl_core::trajopt::{optimize, reward_of, OptimizerSettings};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_s as f64 {
        Ok(())
    } else {
        Err(format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
    }
}

fn random_scenario(rng: &mut ChaCha8Rng, k_len: usize) -> Scenario {
    let controls: Vec<Control> =
        (0..k_len).map(|_| Control::new(rng.gen_range(8.0..14.0), rng.gen_range(-0.15..0.15))).collect();
    let x0 = State::new(rng.gen_range(-0.5..0.5), 0.0, FRAC_PI_2 + rng.gen_range(-0.1..0.1));
    let ego = Trajectory::from_controls(x0, controls, DT).unwrap();
    let w = 3.7;
    let lanes = LaneGeometry::new(
        Line::new([0.0, 0.0], [0.0, 1.0]).unwrap(),
        Line::new([w, 0.0], [rng.gen_range(-0.03..0.03), 1.0]).unwrap(),
        w,
    )
    .unwrap();
    let adjacent = AdjacentRole::ALL.map(|role| {
        let lane_x = match role {
            AdjacentRole::PrecedingCurrent | AdjacentRole::FollowingCurrent => 0.0,
            _ => w,
        };
        let y0 = if role.is_preceding() { rng.gen_range(6.0..20.0) } else { rng.gen_range(-20.0..-6.0) };
        let speed = rng.gen_range(8.0..14.0);
        AdjacentTrack {
            role,
            vehicle_id: None,
            positions: (0..k_len).map(|k| [lane_x + rng.gen_range(-0.3..0.3), y0 + speed * DT * k as f64]).collect(),
            speeds: vec![speed; k_len],
            present: vec![true; k_len],
            lead_in: Vec::new(),
        }
    });
    let mut s = Scenario { id: "random".into(), ego, adjacent, lanes, v_d: 0.0, theta_star: None };
    s.v_d = mean_traffic_speed(&s.adjacent).unwrap();
    s
}

fn random_z(rng: &mut ChaCha8Rng, k_len: usize) -> UnpredictabilitySeries {
    let mut z = UnpredictabilitySeries::zeros(k_len, DEFAULT_LOOKBACK);
    for car in 0..4 {
        for k in DEFAULT_LOOKBACK..k_len {
            z.z[car][k] = rng.gen_range(0.0..1.5);
        }
    }
    z
}

fn random_norm(rng: &mut ChaCha8Rng, n: usize) -> NormalizationConstants {
    NormalizationConstants {
        min: (0..n).map(|_| rng.gen_range(-3.0..-1.0)).collect(),
        max: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
    }
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

fn dynamics_jacobian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (k_len, h) = (10, 1e-6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x0 = State::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-PI..PI));
        let controls: Vec<Control> =
            (0..k_len).map(|_| Control::new(rng.gen_range(0.0..30.0), rng.gen_range(-0.5..0.5))).collect();
        let jac = rollout_sensitivity(x0, &controls, DT).map_err(|e| e.to_string())?;
        let u0: Vec<f64> = controls.iter().flat_map(|c| [c.v, c.omega]).collect();
        for col in 0..2 * k_len {
            let at = |d: f64| {
                let mut u = u0.clone();
                u[col] += d;
                rollout(x0, &controls_from_lifted(&u), DT).unwrap()
            };
            let (up, dn) = (at(h), at(-h));
            for k in 0..k_len {
                let fd = [
                    (up[k].x - dn[k].x) / (2.0 * h),
                    (up[k].y - dn[k].y) / (2.0 * h),
                    wrap(up[k].psi - dn[k].psi) / (2.0 * h),
                ];
                for (q, v) in fd.iter().enumerate() {
                    worst = worst.max((v - jac[(3 * k + q, col)]).abs());
                }
            }
        }
    }
    check(worst < 1e-6, format!("max abs error {worst:.2e} over 100 instances (< 1e-6)"))
}

fn feature_derivatives() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = FeatureConfig::default();
    let h = 1e-5;
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let s = random_scenario(&mut rng, 10);
        let z = random_z(&mut rng, 10);
        let norm = random_norm(&mut rng, 7);
        let obj = Objective::new(&s, Some(&z), &cfg, &norm, Variant::Unpred).map_err(|e| e.to_string())?;
        let u0 = s.ego.lifted_controls();
        let d = obj.evaluate(&s.ego.controls, Order::Hessian).map_err(|e| e.to_string())?;
        for col in 0..u0.len() {
            let at = |delta: f64| {
                let mut u = u0.clone();
                u[col] += delta;
                obj.evaluate(&controls_from_lifted(&u), Order::Gradient).unwrap()
            };
            let (fp, fm) = (at(h), at(-h));
            for i in 0..7 {
                worst_g = worst_g.max(((fp.values[i] - fm.values[i]) / (2.0 * h) - d.gradients[i][col]).abs());
                for row in 0..u0.len() {
                    let fd = (fp.gradients[i][row] - fm.gradients[i][row]) / (2.0 * h);
                    worst_h = worst_h.max((fd - d.hessians[i][(row, col)]).abs());
                }
            }
        }
    }
    check(
        worst_g < 1e-4 && worst_h < 1e-4,
        format!("all 7 features, 50 scenarios: max |Δg| {worst_g:.2e}, max |ΔH| {worst_h:.2e} (< 1e-4)"),
    )
}

fn dense(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

struct LikelihoodErrors {
    value: f64,
    grad_rel: f64,
    cholesky: f64,
}

fn likelihood_instances() -> Result<LikelihoodErrors, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = FeatureConfig::default();
    let mut out = LikelihoodErrors { value: 0.0, grad_rel: 0.0, cholesky: 0.0 };
    for _ in 0..25 {
        let s = random_scenario(&mut rng, 10);
        let z = random_z(&mut rng, 10);
        let norm = random_norm(&mut rng, 7);
        let p = per_feature_derivatives(&s, Some(&z), &cfg, &norm, Variant::Unpred).map_err(|e| e.to_string())?;
        let theta: Vec<f64> = (0..7).map(|_| rng.gen_range(0.1..2.0)).collect();
        let lp = log_likelihood(&p, &theta).map_err(|e| e.to_string())?;

        let n = lp.g.len();
        let mut h_reg = dense(&lp.h);
        for i in 0..n {
            h_reg[(i, i)] -= lp.lambda;
        }
        let g = DVector::from_vec(lp.g.clone());
        let inv = h_reg.clone().try_inverse().ok_or("singular regularized Hessian")?;
        let log_det = (-&h_reg).determinant().ln();
        let want = 0.5 * g.dot(&(&inv * &g)) + 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln();
        out.value = out.value.max((lp.loglik - want).abs());

        let half: f64 = (0..n).map(|i| lp.l[(i, i)].ln()).sum();
        out.cholesky = out.cholesky.max((half - 0.5 * log_det).abs());

        let grad = log_likelihood_grad(&p, &theta).map_err(|e| e.to_string())?;
        for j in 0..7 {
            let at = |d: f64| {
                let mut t = theta.clone();
                t[j] += d;
                log_likelihood(&p, &t).unwrap().loglik
            };
            let fd = (at(1e-6) - at(-1e-6)) / 2e-6;
            out.grad_rel = out.grad_rel.max((fd - grad[j]).abs() / fd.abs().max(1.0));
        }
    }
    Ok(out)
}

fn likelihood(errors: &Result<LikelihoodErrors, String>) -> Outcome {
    let e = errors.as_ref().map_err(Clone::clone)?;
    check(
        e.value < 1e-8 && e.grad_rel < 1e-4,
        format!("25 instances: dense oracle {:.2e} (< 1e-8), gradient rel err {:.2e} (< 1e-4)", e.value, e.grad_rel),
    )
}

fn cholesky_identity(errors: &Result<LikelihoodErrors, String>) -> Outcome {
    let e = errors.as_ref().map_err(Clone::clone)?;
    check(e.cholesky < 1e-8, format!("max |Σ log L_ii - ½ log|-H_reg|| {:.2e} (< 1e-8)", e.cholesky))
}

fn baseline_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = FeatureConfig::default();
    let opt = OptimizerSettings::default();
    let (mut reward, mut lik, mut traj) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..10 {
        let mut s = make_scene(&varied_spec(i), i as u64).map_err(|e| e.to_string())?;
        let controls: Vec<Control> = s
            .ego
            .controls
            .iter()
            .map(|c| Control::new(c.v + rng.gen_range(-1.0..1.0), rng.gen_range(-0.05..0.05)))
            .collect();
        s.ego = Trajectory::from_controls(s.ego.x0, controls, DT).map_err(|e| e.to_string())?;
        let z = UnpredictabilitySeries::zeros(s.horizon(), DEFAULT_LOOKBACK);
        let theta5: Vec<f64> = (0..5).map(|_| rng.gen_range(0.2..3.0)).collect();
        let norm5 = random_norm(&mut rng, 5);
        let mut norm7 = norm5.clone();
        norm7.min.extend([norm5.min[3], norm5.min[4]]);
        norm7.max.extend([norm5.max[3], norm5.max[4]]);
        let mut theta7 = theta5.clone();
        theta7.extend([0.0, 0.0]);
        let model = |variant, theta: &Vec<f64>, norm: &NormalizationConstants| RewardModel {
            variant,
            theta: ThetaWeights::new(variant, theta.clone()).unwrap(),
            config: cfg,
            normalization: norm.clone(),
        };
        let base = model(Variant::Baseline, &theta5, &norm5);
        let unpred = model(Variant::Unpred, &theta7, &norm7);

        let (rb, gb) = reward_of(&s.ego, &s, &base, None).map_err(|e| e.to_string())?;
        let (ru, gu) = reward_of(&s.ego, &s, &unpred, Some(&z)).map_err(|e| e.to_string())?;
        reward = reward.max((rb - ru).abs());
        reward = gb.iter().zip(&gu).fold(reward, |m, (a, b)| m.max((a - b).abs()));

        let pb = per_feature_derivatives(&s, None, &cfg, &norm5, Variant::Baseline).map_err(|e| e.to_string())?;
        let pu = per_feature_derivatives(&s, Some(&z), &cfg, &norm7, Variant::Unpred).map_err(|e| e.to_string())?;
        let lb = log_likelihood(&pb, &theta5).map_err(|e| e.to_string())?.loglik;
        let lu = log_likelihood(&pu, &theta7).map_err(|e| e.to_string())?.loglik;
        lik = lik.max((lb - lu).abs());

        let tb = optimize(&s, &base, None, &opt).map_err(|e| e.to_string())?.trajectory;
        let tu = optimize(&s, &unpred, Some(&z), &opt).map_err(|e| e.to_string())?.trajectory;
        for (a, b) in tb.states.iter().zip(&tu.states) {
            traj = traj.max((a.x - b.x).abs()).max((a.y - b.y).abs()).max((a.psi - b.psi).abs());
        }
    }
    check(
        reward < 1e-10 && lik < 1e-10 && traj < 1e-10,
        format!("10 scenarios: reward {reward:.1e}, likelihood {lik:.1e}, trajectory {traj:.1e} (< 1e-10)"),
    )
}

fn parameter_recovery() -> Outcome {
    let start = Instant::now();
    let theta_star = vec![1.0, 0.05, 20.0, 2.0, 2.0];
    let cfg = FeatureConfig::default();
    let opt = OptimizerSettings::default();
    let truth = RewardModel {
        variant: Variant::Baseline,
        theta: ThetaWeights::new(Variant::Baseline, theta_star.clone()).unwrap(),
        config: cfg,
        normalization: NormalizationConstants::identity(5),
    };
    let mut demos = Vec::new();
    for i in 0..50 {
        let scene = make_scene(&varied_spec(i), i as u64).map_err(|e| e.to_string())?;
        let (expert, _) = make_expert(&scene, &truth, None, &opt, 0.0, i as u64).map_err(|e| e.to_string())?;
        demos.push(Demonstration { scenario: expert, z: None });
    }
    let fitted = fit(&demos, Variant::Baseline, &cfg, &FitSettings::default()).map_err(|e| e.to_string())?;
    let model = fitted.model;
    let mut regenerated = Vec::new();
    for d in &demos {
        regenerated.push(optimize(&d.scenario, &model, None, &opt).map_err(|e| e.to_string())?.trajectory);
    }
    let mee = avg_mee(regenerated.iter().zip(demos.iter().map(|d| &d.scenario.ego))).map_err(|e| e.to_string())?;
    // Weights on normalized features, expressed per raw feature unit.
    let raw: Vec<f64> = model
        .theta
        .values
        .iter()
        .enumerate()
        .map(|(i, t)| t / (model.normalization.max[i] - model.normalization.min[i]))
        .collect();
    let dot: f64 = raw.iter().zip(&theta_star).map(|(a, b)| a * b).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = dot / (norm(&raw) * norm(&theta_star));
    within(start.elapsed(), 900)?;
    check(
        mee.mean < 0.3 && cos > 0.9,
        format!("50 experts: Average MEE {:.3} m (< 0.3), cosine {cos:.4} (> 0.9)", mee.mean),
    )
}

fn unpredictability_effect() -> Outcome {
    let start = Instant::now();
    let mut spec = zigzag_spec();
    let erratic = AdjacentRole::PrecedingTarget;
    if let Some(car) = spec.cars[erratic.index()].as_mut() {
        *car = CarSpec { gap: 30.0, speed: 6.0, ..*car };
    }
    let scene = make_scene(&spec, 0).map_err(|e| e.to_string())?;
    let z = scenario_unpredictability(&scene, &ConstantVelocity, DEFAULT_LOOKBACK).map_err(|e| e.to_string())?;
    let mut distances = Vec::new();
    for theta_pz in [0.0, 5.0, 20.0] {
        let model = RewardModel {
            variant: Variant::Unpred,
            theta: ThetaWeights::new(Variant::Unpred, vec![1.0, 0.05, 20.0, 2.0, 2.0, theta_pz, 0.0]).unwrap(),
            config: FeatureConfig::default(),
            normalization: NormalizationConstants::identity(7),
        };
        let traj =
            optimize(&scene, &model, Some(&z), &OptimizerSettings::default()).map_err(|e| e.to_string())?.trajectory;
        distances.push(min_distance(&traj, scene.track(erratic)).map_err(|e| e.to_string())?.distance);
    }
    within(start.elapsed(), 120)?;
    let ok = distances[0] <= distances[1] && distances[1] <= distances[2] && distances[0] < distances[2];
    check(
        ok,
        format!("θ_pz 0 / 5 / 20: min distance {:.2} / {:.2} / {:.2} m", distances[0], distances[1], distances[2]),
    )
}

/// Mean error of the constant-velocity forecast issued `t_n` steps back,
/// written out directly from the track and its lead-in.
fn brute_force_z(track: &AdjacentTrack, k: usize, t_n: usize) -> f64 {
    let issue = k - t_n;
    let at = |j: isize| {
        if j >= 0 {
            track.positions[j as usize]
        } else {
            track.lead_in[(track.lead_in.len() as isize + j) as usize]
        }
    };
    let p = at(issue as isize);
    let q = at(issue as isize - 1);
    let mut total = 0.0;
    for s in 1..=t_n {
        let pred = [p[0] + s as f64 * (p[0] - q[0]), p[1] + s as f64 * (p[1] - q[1])];
        let actual = track.positions[issue + s];
        total += ((pred[0] - actual[0]).powi(2) + (pred[1] - actual[1]).powi(2)).sqrt();
    }
    total / t_n as f64
}

fn unpredictability_metric() -> Outcome {
    let scene = make_scene(&zigzag_spec(), 0).map_err(|e| e.to_string())?;
    let t_n = DEFAULT_LOOKBACK;
    let series = scenario_unpredictability(&scene, &ConstantVelocity, t_n).map_err(|e| e.to_string())?;
    let trace = PredictionTrace::from_predictor(&scene, &ConstantVelocity, t_n).map_err(|e| e.to_string())?;
    let erratic = AdjacentRole::PrecedingTarget;
    let (mut cv_max, mut zig_min, mut oracle) = (0.0f64, f64::INFINITY, 0.0f64);
    for (car, track) in scene.adjacent.iter().enumerate() {
        let strict = unpredictability(&trace, track, car, t_n).map_err(|e| e.to_string())?;
        for k in t_n..scene.horizon() {
            let want = brute_force_z(track, k, t_n);
            oracle = oracle.max((series.z[car][k] - want).abs()).max((strict[k] - want).abs());
            if track.role == erratic {
                zig_min = zig_min.min(series.z[car][k]);
            }
        }
        if track.role != erratic {
            cv_max = series.z[car].iter().fold(cv_max, |m, v| m.max(v.abs()));
        }
    }
    check(
        cv_max < 1e-9 && zig_min > 0.0 && oracle < 1e-12,
        format!("constant-velocity max z {cv_max:.1e} (< 1e-9), zigzag min z {zig_min:.3e} (> 0), oracle {oracle:.1e} (< 1e-12)"),
    )
}

fn evaluation_arithmetic() -> Outcome {
    let imp = improvement(5.13, 3.54).map_err(|e| e.to_string())?;
    check((imp - 31.0).abs() <= 0.5, format!("improvement(5.13, 3.54) = {imp:.2} % (31 ± 0.5)"))
}

fn ingest_round_trip() -> Outcome {
    let (tracks, _) =
        make_recording(&RecordingSpec { noise: 0.03, ..RecordingSpec::default() }, 3).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_tracks(&mut buf, &tracks, &Schema::Ngsim.columns(), Units::Feet).map_err(|e| e.to_string())?;
    let back =
        parse_tracks(buf.as_slice(), &Schema::Ngsim.columns(), Units::Feet, "fixture").map_err(|e| e.to_string())?;
    let mut round_trip = 0.0f64;
    if back.len() != tracks.len() {
        return Err(format!("{} tracks re-parsed from {}", back.len(), tracks.len()));
    }
    for (a, b) in tracks.iter().zip(&back) {
        if (a.vehicle_id, &a.frames, &a.lane_ids) != (b.vehicle_id, &b.frames, &b.lane_ids) {
            return Err(format!("vehicle {} changed in the round trip", a.vehicle_id));
        }
        for (p, q) in a.positions.iter().zip(&b.positions) {
            round_trip = round_trip.max((p[0] - q[0]).abs()).max((p[1] - q[1]).abs());
        }
    }

    let mut replay = 0.0f64;
    for accel in [0.0, 1.0, -1.5] {
        let spec = RecordingSpec { ego_accel: accel, ..RecordingSpec::default() };
        let (tracks, truth) = make_recording(&spec, 0).map_err(|e| e.to_string())?;
        let out = extract_from_raw(&tracks, "rec", &ExtractSettings::default()).map_err(|e| e.to_string())?;
        if out.scenarios.len() != 1 {
            return Err(format!("{} scenarios from the scripted scene", out.scenarios.len()));
        }
        let s = &out.scenarios[0];
        for role in AdjacentRole::ALL {
            let track = s.track(role);
            if track.vehicle_id != truth.neighbors[role.index()] {
                return Err(format!("{} is vehicle {:?}", role.name(), track.vehicle_id));
            }
            let ahead = track.positions[0][1] > s.ego.x0.y;
            if ahead != role.is_preceding() {
                return Err(format!("{} on the wrong side of the ego", role.name()));
            }
        }
        let ego = tracks.iter().find(|t| t.vehicle_id == truth.ego_id).ok_or("ego missing")?;
        let t_s = truth.change_frame - 20;
        let origin = ego.positions[ego.frames.iter().position(|&f| f == t_s).ok_or("no window start")?];
        for (k, state) in s.ego.states.iter().enumerate() {
            let i = ego.frames.iter().position(|&f| f == t_s + k as i64 + 1).ok_or("frame missing")?;
            let p = ego.positions[i];
            replay = replay.max((state.x - (p[0] - origin[0])).hypot(state.y - (p[1] - origin[1])));
        }
    }
    check(
        round_trip < 1e-9 && replay < 0.05,
        format!("NGSIM feet round trip {round_trip:.1e} (< 1e-9), one scenario with correct roles, replay {replay:.3} m (< 0.05)"),
    )
}

fn lcirl(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lcirl"))
        .current_dir(dir)
        .env_remove("LCIRL_CONFIG")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("lcirl {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn files_under(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let spec = "[scene]\nid = \"det\"\nhorizon = 30\ngap_jitter = 5.0\nspeed_jitter = 1.0\n";
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for run in &runs {
        let d = run.path();
        fs::write(d.join("spec.toml"), spec).map_err(|e| e.to_string())?;
        lcirl(
            d,
            &[
                "synth",
                "--spec",
                "spec.toml",
                "--theta-star",
                "1,0.05,20,2,2",
                "--n",
                "4",
                "--seed",
                "9",
                "--out-dir",
                "syn",
            ],
        )?;
        lcirl(d, &["train", "--data-dir", "syn", "--split", "all", "--seed", "7", "--out-model", "out/model.json"])?;
        lcirl(
            d,
            &[
                "generate",
                "--model",
                "out/model.json",
                "--data-dir",
                "syn",
                "--restarts",
                "2",
                "--seed",
                "5",
                "--out-dir",
                "out/gen",
            ],
        )?;
    }
    let (a, b) = (runs[0].path().join("out"), runs[1].path().join("out"));
    let files = files_under(&a);
    for f in &files {
        let rel = f.strip_prefix(&a).unwrap();
        let other = b.join(rel);
        if fs::read(f).ok() != fs::read(&other).ok() {
            return Err(format!("{} differs between runs", rel.display()));
        }
    }
    if files.len() != files_under(&b).len() {
        return Err("different file sets".into());
    }
    check(
        files.len() >= 10,
        format!("{} model, report and trajectory files byte-identical across two runs", files.len()),
    )
}

fn main() {
    let start = Instant::now();
    let likelihood_errors = likelihood_instances();
    let likelihood_time = start.elapsed();
    type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        (
            "dynamics Jacobian",
            Box::new(|| {
                let t = Instant::now();
                let r = dynamics_jacobian();
                within(t.elapsed(), 10)?;
                r
            }),
        ),
        (
            "feature derivatives",
            Box::new(|| {
                let t = Instant::now();
                let r = feature_derivatives();
                within(t.elapsed(), 60)?;
                r
            }),
        ),
        (
            "likelihood",
            Box::new(|| {
                within(likelihood_time, 60)?;
                likelihood(&likelihood_errors)
            }),
        ),
        ("Cholesky identity", Box::new(|| cholesky_identity(&likelihood_errors))),
        ("baseline reduction", Box::new(baseline_reduction)),
        ("parameter recovery", Box::new(parameter_recovery)),
        ("unpredictability effect", Box::new(unpredictability_effect)),
        ("unpredictability metric", Box::new(unpredictability_metric)),
        ("evaluation arithmetic", Box::new(evaluation_arithmetic)),
        ("ingest round trip", Box::new(ingest_round_trip)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail} [{secs:.1} s]", i + 1);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
