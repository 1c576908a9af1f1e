//! Shared domain types: ego states and controls, trajectories, lane lines,
//! adjacent vehicles and scenarios.
//!
//! Coordinates are scenario-local: `x` is lateral, `y` is longitudinal, and
//! the ego vehicle starts at the origin.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::dynamics;
use crate::error::{ensure_finite, Error, Result};

/// Default sampling period (s).
pub const DT: f64 = 0.1;
/// Default horizon: a 7 s lane-change window at 10 Hz.
pub const HORIZON: usize = 70;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl State {
    pub const fn new(x: f64, y: f64, psi: f64) -> Self {
        Self { x, y, psi }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.psi.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub v: f64,
    pub omega: f64,
}

impl Control {
    pub const fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> Result<f64> {
    ensure_finite("angle", a)?;
    let mut r = a % TAU;
    if r <= -PI {
        r += TAU;
    } else if r > PI {
        r -= TAU;
    }
    Ok(r)
}

/// Infinite straight line given by a point and a unit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub point: [f64; 2],
    pub direction: [f64; 2],
}

impl Line {
    /// Builds a line, normalizing `direction`.
    pub fn new(point: [f64; 2], direction: [f64; 2]) -> Result<Self> {
        let n = direction[0].hypot(direction[1]);
        if !(n > 0.0) || !n.is_finite() || !point[0].is_finite() || !point[1].is_finite() {
            return Err(Error::InvalidGeometry("line direction must be non-zero and finite"));
        }
        Ok(Self { point, direction: [direction[0] / n, direction[1] / n] })
    }

    /// Unit normal, rotated +90° from the direction.
    pub fn normal(&self) -> [f64; 2] {
        [-self.direction[1], self.direction[0]]
    }

    /// Signed perpendicular offset of `p` along [`Line::normal`].
    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        let n = self.normal();
        n[0] * (p[0] - self.point[0]) + n[1] * (p[1] - self.point[1])
    }

    pub fn project(&self, p: [f64; 2]) -> [f64; 2] {
        let d = self.direction;
        let s = d[0] * (p[0] - self.point[0]) + d[1] * (p[1] - self.point[1]);
        [self.point[0] + s * d[0], self.point[1] + s * d[1]]
    }

    pub fn translated(&self, by: [f64; 2]) -> Self {
        Self { point: [self.point[0] + by[0], self.point[1] + by[1]], direction: self.direction }
    }

    fn check(&self) -> Result<()> {
        let n = self.direction[0].hypot(self.direction[1]);
        if (n - 1.0).abs() > 1e-9 || !self.point[0].is_finite() || !self.point[1].is_finite() {
            return Err(Error::InvalidGeometry("line direction must have unit norm"));
        }
        Ok(())
    }
}

/// Perpendicular distance from `p` to `line` (m).
pub fn lateral_distance(p: [f64; 2], line: &Line) -> Result<f64> {
    line.check()?;
    Ok(line.signed_distance(p).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneGeometry {
    pub current_line: Line,
    pub target_line: Line,
    /// Mean centerline spacing (m).
    pub w: f64,
}

impl LaneGeometry {
    pub fn new(current_line: Line, target_line: Line, w: f64) -> Result<Self> {
        let lanes = Self { current_line, target_line, w };
        lanes.validate()?;
        Ok(lanes)
    }

    pub fn validate(&self) -> Result<()> {
        self.current_line.check()?;
        self.target_line.check()?;
        if !(self.w > 0.0) || !self.w.is_finite() {
            return Err(Error::InvalidGeometry("lane spacing must be positive"));
        }
        Ok(())
    }

    pub fn translated(&self, by: [f64; 2]) -> Self {
        Self { current_line: self.current_line.translated(by), target_line: self.target_line.translated(by), w: self.w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjacentRole {
    PrecedingCurrent,
    PrecedingTarget,
    FollowingCurrent,
    FollowingTarget,
}

impl AdjacentRole {
    /// Roles in storage order; `Scenario::adjacent[i]` has role `ALL[i]`.
    pub const ALL: [AdjacentRole; 4] = [
        AdjacentRole::PrecedingCurrent,
        AdjacentRole::PrecedingTarget,
        AdjacentRole::FollowingCurrent,
        AdjacentRole::FollowingTarget,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_preceding(self) -> bool {
        matches!(self, AdjacentRole::PrecedingCurrent | AdjacentRole::PrecedingTarget)
    }

    pub fn name(self) -> &'static str {
        match self {
            AdjacentRole::PrecedingCurrent => "preceding-current",
            AdjacentRole::PrecedingTarget => "preceding-target",
            AdjacentRole::FollowingCurrent => "following-current",
            AdjacentRole::FollowingTarget => "following-target",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacentTrack {
    pub role: AdjacentRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle_id: Option<u64>,
    pub positions: Vec<[f64; 2]>,
    pub speeds: Vec<f64>,
    pub present: Vec<bool>,
    /// Positions observed just before step 0, oldest first. Lets a predictor
    /// issue a forecast at step 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lead_in: Vec<[f64; 2]>,
}

impl AdjacentTrack {
    /// A track whose vehicle is missing at every step.
    pub fn absent(role: AdjacentRole, k: usize) -> Self {
        Self {
            role,
            vehicle_id: None,
            positions: alloc::vec![[0.0, 0.0]; k],
            speeds: alloc::vec![0.0; k],
            present: alloc::vec![false; k],
            lead_in: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn any_present(&self) -> bool {
        self.present.iter().any(|&p| p)
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.positions.len() != k || self.speeds.len() != k || self.present.len() != k {
            return Err(Error::Shape(format!(
                "{} track has {} positions, {} speeds, {} mask entries; expected {k}",
                self.role.name(),
                self.positions.len(),
                self.speeds.len(),
                self.present.len()
            )));
        }
        for i in 0..k {
            if !self.present[i] {
                continue;
            }
            let [px, py] = self.positions[i];
            ensure_finite("adjacent position", px)?;
            ensure_finite("adjacent position", py)?;
            let s = ensure_finite("adjacent speed", self.speeds[i])?;
            if s < 0.0 {
                return Err(Error::InvalidValue { what: "adjacent speed", value: s });
            }
        }
        Ok(())
    }

    pub fn translated(&self, by: [f64; 2]) -> Self {
        let shift = |p: &[f64; 2]| [p[0] + by[0], p[1] + by[1]];
        Self {
            role: self.role,
            vehicle_id: self.vehicle_id,
            positions: self.positions.iter().map(shift).collect(),
            speeds: self.speeds.clone(),
            present: self.present.clone(),
            lead_in: self.lead_in.iter().map(shift).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub x0: State,
    pub controls: Vec<Control>,
    /// `states[k]` is the state after applying `controls[k]`.
    pub states: Vec<State>,
    pub dt: f64,
}

impl Trajectory {
    /// Rolls `controls` out from `x0`.
    pub fn from_controls(x0: State, controls: Vec<Control>, dt: f64) -> Result<Self> {
        let states = dynamics::rollout(x0, &controls, dt)?;
        Ok(Self { x0, controls, states, dt })
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// The state at which control `k` is applied: `x0` for `k = 0`, otherwise
    /// `states[k - 1]`.
    pub fn state_before(&self, k: usize) -> State {
        if k == 0 {
            self.x0
        } else {
            self.states[k - 1]
        }
    }

    /// Positions of `x_0 .. x_{K-1}`, the states paired with each control.
    pub fn step_positions(&self) -> Vec<[f64; 2]> {
        (0..self.horizon()).map(|k| self.state_before(k).position()).collect()
    }

    /// Flattened control vector `[v_0, ω_0, v_1, ω_1, …]`.
    pub fn lifted_controls(&self) -> Vec<f64> {
        self.controls.iter().flat_map(|u| [u.v, u.omega]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.controls.is_empty() {
            return Err(Error::Shape("trajectory needs at least one control".into()));
        }
        if self.states.len() != self.controls.len() {
            return Err(Error::Shape(format!("{} states for {} controls", self.states.len(), self.controls.len())));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidValue { what: "dt", value: self.dt });
        }
        for u in &self.controls {
            if u.v < 0.0 {
                return Err(Error::InvalidValue { what: "speed control", value: u.v });
            }
        }
        let replay = dynamics::rollout(self.x0, &self.controls, self.dt)?;
        for (k, (a, b)) in replay.iter().zip(&self.states).enumerate() {
            let dpsi = wrap_angle(a.psi - b.psi)?;
            if (a.x - b.x).abs() > 1e-9 || (a.y - b.y).abs() > 1e-9 || dpsi.abs() > 1e-9 {
                return Err(Error::Shape(format!("state {k} does not match the rollout of the controls")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub ego: Trajectory,
    /// Indexed by [`AdjacentRole::index`].
    pub adjacent: [AdjacentTrack; 4],
    pub lanes: LaneGeometry,
    /// Mean traffic speed (m/s).
    pub v_d: f64,
    /// Weights that generated a synthetic expert, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<Vec<f64>>,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.ego.horizon()
    }

    pub fn dt(&self) -> f64 {
        self.ego.dt
    }

    pub fn track(&self, role: AdjacentRole) -> &AdjacentTrack {
        &self.adjacent[role.index()]
    }

    pub fn validate(&self) -> Result<()> {
        self.ego.validate()?;
        self.lanes.validate()?;
        let k = self.horizon();
        for (i, track) in self.adjacent.iter().enumerate() {
            if track.role.index() != i {
                return Err(Error::Shape(format!("adjacent slot {i} holds role {}", track.role.name())));
            }
            track.validate(k)?;
        }
        if !(self.v_d >= 0.0) || !self.v_d.is_finite() {
            return Err(Error::InvalidValue { what: "v_d", value: self.v_d });
        }
        Ok(())
    }

    /// Replaces the ego trajectory, keeping the surroundings.
    pub fn with_ego(&self, ego: Trajectory) -> Self {
        Self { ego, ..self.clone() }
    }
}

/// Mean speed over every present sample of the adjacent tracks, or `None`
/// when no adjacent vehicle is ever present.
pub fn mean_traffic_speed(adjacent: &[AdjacentTrack]) -> Option<f64> {
    let (sum, n) = adjacent
        .iter()
        .flat_map(|t| t.speeds.iter().zip(&t.present))
        .filter(|(_, &p)| p)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "train" => Some(Split::Train),
            "validation" | "val" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub scenarios: Vec<Scenario>,
    pub split: Split,
    pub source: String,
}

impl Dataset {
    pub fn new(scenarios: Vec<Scenario>, split: Split, source: impl Into<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &scenarios {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Config(format!("duplicate scenario id {}", s.id)));
            }
        }
        Ok(Self { scenarios, split, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}
