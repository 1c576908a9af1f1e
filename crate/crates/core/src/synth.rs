//! Synthetic two-lane scenes with scripted neighbors, and experts generated
//! as reward optima under known weights.
//!
//! The ego starts at the origin heading +y in the current lane (`x = 0`); the
//! target lane is `x = w`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::RewardModel;
use crate::ingest::RawTrack;
use crate::prediction::UnpredictabilitySeries;
use crate::scenario::{
    mean_traffic_speed, AdjacentRole, AdjacentTrack, Control, LaneGeometry, Line, Scenario, State, Trajectory, DT,
    HORIZON,
};
use crate::trajopt::{optimize, ConvergenceReport, OptimizerSettings};

pub const DEFAULT_LANE_WIDTH: f64 = 3.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Behavior {
    ConstantVelocity,
    /// Lateral sinusoid of amplitude `amplitude` (m) and period `period` (s).
    Zigzag {
        amplitude: f64,
        period: f64,
    },
    /// Smooth lateral move of `offset` m starting at `start` s, lasting `duration` s.
    CutIn {
        offset: f64,
        start: f64,
        duration: f64,
    },
    /// Constant longitudinal acceleration from `start` s on.
    SpeedUp {
        accel: f64,
        start: f64,
    },
}

impl Behavior {
    pub const fn zigzag() -> Self {
        Behavior::Zigzag { amplitude: 0.5, period: 2.0 }
    }

    fn lateral(&self, t: f64) -> f64 {
        match *self {
            Behavior::Zigzag { amplitude, period } => amplitude * (2.0 * PI * t / period).sin(),
            Behavior::CutIn { offset, start, duration } => {
                let s = ((t - start) / duration).clamp(0.0, 1.0);
                offset * 0.5 * (1.0 - (PI * s).cos())
            }
            _ => 0.0,
        }
    }

    fn lateral_rate(&self, t: f64) -> f64 {
        match *self {
            Behavior::Zigzag { amplitude, period } => amplitude * 2.0 * PI / period * (2.0 * PI * t / period).cos(),
            Behavior::CutIn { offset, start, duration } => {
                let s = (t - start) / duration;
                if (0.0..=1.0).contains(&s) {
                    offset * 0.5 * PI / duration * (PI * s).sin()
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    /// Longitudinal displacement and speed after `t` s at initial speed `v0`.
    fn longitudinal(&self, t: f64, v0: f64) -> (f64, f64) {
        match *self {
            Behavior::SpeedUp { accel, start } if t > start => {
                let tau = t - start;
                (v0 * t + 0.5 * accel * tau * tau, v0 + accel * tau)
            }
            _ => (v0 * t, v0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Behavior::ConstantVelocity => true,
            Behavior::Zigzag { amplitude, period } => amplitude.is_finite() && period > 0.0 && period.is_finite(),
            Behavior::CutIn { offset, start, duration } => {
                offset.is_finite() && start.is_finite() && duration > 0.0 && duration.is_finite()
            }
            Behavior::SpeedUp { accel, start } => accel.is_finite() && start.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid behavior {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarSpec {
    /// Longitudinal offset from the ego at `t = 0` (m).
    pub gap: f64,
    pub speed: f64,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub id: String,
    pub w: f64,
    pub ego_speed: f64,
    pub horizon: usize,
    /// Samples of each neighbor before step 0, for predictors.
    pub lead_in: usize,
    /// Per role, indexed like [`AdjacentRole::ALL`]; `None` leaves the slot empty.
    pub cars: [Option<CarSpec>; 4],
    /// Half-widths of seeded uniform jitter added to gaps (m) and speeds (m/s).
    pub gap_jitter: f64,
    pub speed_jitter: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let cv = |gap, speed| Some(CarSpec { gap, speed, behavior: Behavior::ConstantVelocity });
        Self {
            id: "synth".into(),
            w: DEFAULT_LANE_WIDTH,
            ego_speed: 12.0,
            horizon: HORIZON,
            lead_in: 20,
            cars: [cv(25.0, 12.0), cv(15.0, 12.5), cv(-20.0, 12.0), cv(-15.0, 11.5)],
            gap_jitter: 0.0,
            speed_jitter: 0.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0) || !self.w.is_finite() {
            return Err(Error::InvalidValue { what: "lane width", value: self.w });
        }
        if !(self.ego_speed >= 0.0) || !self.ego_speed.is_finite() {
            return Err(Error::InvalidValue { what: "ego speed", value: self.ego_speed });
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if !(self.gap_jitter >= 0.0) || !(self.speed_jitter >= 0.0) {
            return Err(Error::Config("jitter must be nonnegative".into()));
        }
        for car in self.cars.iter().flatten() {
            car.behavior.validate()?;
            if !car.gap.is_finite() || !(car.speed >= 0.0) {
                return Err(Error::Config(format!("invalid car {car:?}")));
            }
        }
        Ok(())
    }
}

/// Lateral lane centre of a role: origin lane `0`, target lane `w`.
pub fn role_lane(role: AdjacentRole, w: f64) -> f64 {
    match role {
        AdjacentRole::PrecedingCurrent | AdjacentRole::FollowingCurrent => 0.0,
        AdjacentRole::PrecedingTarget | AdjacentRole::FollowingTarget => w,
    }
}

/// Position and speed of a scripted car at time `t` (may be negative).
pub fn car_state(car: &CarSpec, lane_x: f64, t: f64) -> ([f64; 2], f64) {
    let (dy, vy) = car.behavior.longitudinal(t, car.speed);
    let vx = car.behavior.lateral_rate(t);
    ([lane_x + car.behavior.lateral(t), car.gap + dy], vx.hypot(vy))
}

fn scripted_track(role: AdjacentRole, car: &CarSpec, spec: &SceneSpec, vehicle_id: u64) -> AdjacentTrack {
    let lane_x = role_lane(role, spec.w);
    let mut track = AdjacentTrack::absent(role, spec.horizon);
    track.vehicle_id = Some(vehicle_id);
    for k in 0..spec.horizon {
        let (p, v) = car_state(car, lane_x, k as f64 * DT);
        track.positions[k] = p;
        track.speeds[k] = v;
        track.present[k] = true;
    }
    track.lead_in = (1..=spec.lead_in).rev().map(|j| car_state(car, lane_x, -(j as f64) * DT).0).collect();
    track
}

/// Builds a scene; the ego holds a placeholder straight-ahead trajectory.
pub fn make_scene(spec: &SceneSpec, seed: u64) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adjacent = AdjacentRole::ALL.map(|r| AdjacentTrack::absent(r, spec.horizon));
    for role in AdjacentRole::ALL {
        // Draw jitter for every slot so empty slots do not shift later draws.
        let dg = if spec.gap_jitter > 0.0 { rng.gen_range(-spec.gap_jitter..=spec.gap_jitter) } else { 0.0 };
        let dv = if spec.speed_jitter > 0.0 { rng.gen_range(-spec.speed_jitter..=spec.speed_jitter) } else { 0.0 };
        if let Some(car) = spec.cars[role.index()] {
            let car = CarSpec { gap: car.gap + dg, speed: (car.speed + dv).max(0.0), ..car };
            adjacent[role.index()] = scripted_track(role, &car, spec, role.index() as u64 + 1);
        }
    }
    let ego = Trajectory::from_controls(
        State::new(0.0, 0.0, FRAC_PI_2),
        alloc::vec![Control::new(spec.ego_speed, 0.0); spec.horizon],
        DT,
    )?;
    let lanes = LaneGeometry::new(Line::new([0.0, 0.0], [0.0, 1.0])?, Line::new([spec.w, 0.0], [0.0, 1.0])?, spec.w)?;
    let v_d = mean_traffic_speed(&adjacent).unwrap_or(spec.ego_speed);
    let scenario = Scenario { id: spec.id.clone(), ego, adjacent, lanes, v_d, theta_star: None };
    scenario.validate()?;
    Ok(scenario)
}

/// Replaces the ego with the optimum under `model`, optionally perturbing the
/// controls with seeded Gaussian noise of standard deviation `noise`.
pub fn make_expert(
    scene: &Scenario,
    model: &RewardModel,
    z: Option<&UnpredictabilitySeries>,
    settings: &OptimizerSettings,
    noise: f64,
    seed: u64,
) -> Result<(Scenario, ConvergenceReport)> {
    let out = optimize(scene, model, z, settings)?;
    let mut ego = out.trajectory;
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).map_err(|_| Error::InvalidValue { what: "noise", value: noise })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let controls: Vec<Control> = ego
            .controls
            .iter()
            .map(|c| Control::new((c.v + normal.sample(&mut rng)).max(0.0), c.omega + 0.1 * normal.sample(&mut rng)))
            .collect();
        ego = Trajectory::from_controls(ego.x0, controls, ego.dt)?;
    } else if noise < 0.0 || !noise.is_finite() {
        return Err(Error::InvalidValue { what: "noise", value: noise });
    }
    let mut expert = scene.with_ego(ego);
    expert.theta_star = Some(model.theta.values.clone());
    Ok((expert, out.report))
}

/// The preceding car in the target lane zigzags.
pub fn zigzag_spec() -> SceneSpec {
    let mut spec = SceneSpec { id: "zigzag".into(), ..SceneSpec::default() };
    if let Some(car) = spec.cars[AdjacentRole::PrecedingTarget.index()].as_mut() {
        car.behavior = Behavior::zigzag();
    }
    spec
}

/// Seeded variety of scenes for parameter-recovery experiments.
pub fn varied_spec(index: usize) -> SceneSpec {
    SceneSpec { id: format!("synth-{index:03}"), gap_jitter: 6.0, speed_jitter: 1.5, ..SceneSpec::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordingSpec {
    pub w: f64,
    pub first_frame: i64,
    pub frames: usize,
    pub ego_speed: f64,
    pub ego_accel: f64,
    /// Lateral move of the ego from lane 1 to lane 2 (s).
    pub change_start: f64,
    pub change_duration: f64,
    /// Gaps are relative to the ego at the first frame. Cars keep the role
    /// they are given only if the ego does not pass them before the window.
    pub cars: [Option<CarSpec>; 4],
    /// Cars that must not be picked as neighbors: (lane id, gap, speed).
    pub decoys: Vec<(i64, f64, f64)>,
    /// Standard deviation of Gaussian position noise (m).
    pub noise: f64,
}

impl Default for RecordingSpec {
    fn default() -> Self {
        let cv = |gap, speed| Some(CarSpec { gap, speed, behavior: Behavior::ConstantVelocity });
        Self {
            w: DEFAULT_LANE_WIDTH,
            first_frame: 1000,
            frames: 140,
            ego_speed: 12.0,
            ego_accel: 0.0,
            change_start: 5.0,
            change_duration: 4.0,
            cars: [cv(25.0, 12.0), cv(15.0, 12.5), cv(-20.0, 12.0), cv(-15.0, 11.5)],
            decoys: alloc::vec![(2, 70.0, 12.5), (3, 5.0, 12.0)],
            noise: 0.0,
        }
    }
}

/// What a correct extraction of a scripted recording finds.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingTruth {
    pub ego_id: u64,
    /// Frame of the lane-label change.
    pub change_frame: i64,
    /// Nearest car ahead of and behind the ego in each lane, two seconds
    /// before the change.
    pub neighbors: [Option<u64>; 4],
}

/// Lane `id` is centred at `(id - 0.5) w`.
pub fn lane_center(lane: i64, w: f64) -> f64 {
    (lane as f64 - 0.5) * w
}

fn ego_position(spec: &RecordingSpec, t: f64) -> [f64; 2] {
    let s = ((t - spec.change_start) / spec.change_duration).clamp(0.0, 1.0);
    // Braking ends at standstill.
    let t = if spec.ego_accel < 0.0 { t.min(-spec.ego_speed / spec.ego_accel) } else { t };
    [lane_center(1, spec.w) + spec.w * 0.5 * (1.0 - (PI * s).cos()), spec.ego_speed * t + 0.5 * spec.ego_accel * t * t]
}

/// Raw tracks of a scripted lane change from lane 1 to lane 2, with the ego
/// as vehicle 1, role cars as 11 to 14 and decoys from 21 on.
pub fn make_recording(spec: &RecordingSpec, seed: u64) -> Result<(Vec<RawTrack>, RecordingTruth)> {
    if !(spec.w > 0.0) || spec.frames < 3 || !(spec.change_duration > 0.0) {
        return Err(Error::Config("recording needs w > 0, three frames and a positive change duration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, spec.noise).map_err(|_| Error::InvalidValue { what: "noise", value: spec.noise })?;
    let mut noisy = |p: [f64; 2]| {
        if spec.noise > 0.0 {
            [p[0] + normal.sample(&mut rng), p[1] + normal.sample(&mut rng)]
        } else {
            p
        }
    };
    let frames: Vec<i64> = (0..spec.frames as i64).map(|i| spec.first_frame + i).collect();
    let time = |i: usize| i as f64 * DT;
    let mut tracks = Vec::new();

    let ego: Vec<[f64; 2]> = (0..spec.frames).map(|i| ego_position(spec, time(i))).collect();
    let ego_lanes: Vec<i64> = ego.iter().map(|p| if p[0] < spec.w { 1 } else { 2 }).collect();
    let change =
        ego_lanes.iter().position(|&l| l == 2).ok_or(Error::Config("the scripted ego never reaches lane 2".into()))?;
    let window_start = change.saturating_sub(20);
    let ego_y = ego[window_start][1];
    tracks.push(RawTrack {
        vehicle_id: 1,
        frames: frames.clone(),
        positions: ego.into_iter().map(&mut noisy).collect(),
        lane_ids: ego_lanes,
    });

    let mut others = Vec::new();
    for role in AdjacentRole::ALL {
        let Some(car) = spec.cars[role.index()] else { continue };
        let lane = if role_lane(role, 1.0) == 0.0 { 1 } else { 2 };
        others.push((11 + role.index() as u64, lane, car));
    }
    for (j, &(lane, gap, speed)) in spec.decoys.iter().enumerate() {
        others.push((21 + j as u64, lane, CarSpec { gap, speed, behavior: Behavior::ConstantVelocity }));
    }
    let mut nearest: [Option<(f64, u64)>; 4] = [None; 4];
    for &(id, lane, car) in &others {
        let x = lane_center(lane, spec.w);
        tracks.push(RawTrack {
            vehicle_id: id,
            frames: frames.clone(),
            positions: (0..spec.frames).map(|i| noisy(car_state(&car, x, time(i)).0)).collect(),
            lane_ids: alloc::vec![lane; spec.frames],
        });
        let gap = car_state(&car, x, time(window_start)).0[1] - ego_y;
        let role = match (lane, gap > 0.0) {
            (1, true) => AdjacentRole::PrecedingCurrent,
            (1, false) => AdjacentRole::FollowingCurrent,
            (2, true) => AdjacentRole::PrecedingTarget,
            (2, false) => AdjacentRole::FollowingTarget,
            _ => continue,
        };
        let slot = &mut nearest[role.index()];
        if slot.map_or(true, |(g, _)| gap.abs() < g) {
            *slot = Some((gap.abs(), id));
        }
    }
    let neighbors = nearest.map(|n| n.map(|(_, id)| id));
    let truth = RecordingTruth { ego_id: 1, change_frame: frames[change], neighbors };
    Ok((tracks, truth))
}

/// Three straight tracks of 30, 45 and 60 frames in lanes 1 to 3.
pub fn three_vehicle_fixture() -> Vec<RawTrack> {
    [(3u64, 30usize, 1i64, 200i64), (7, 45, 2, 210), (9, 60, 3, 190)]
        .iter()
        .map(|&(id, len, lane, start)| RawTrack {
            vehicle_id: id,
            frames: (start..start + len as i64).collect(),
            positions: (0..len)
                .map(|i| [lane_center(lane, DEFAULT_LANE_WIDTH), 10.0 * id as f64 + 1.1 * i as f64])
                .collect(),
            lane_ids: alloc::vec![lane; len],
        })
        .collect()
}
