//! Turning recorded vehicle tracks into lane-change scenarios.
//!
//! Tracks are smoothed with a symmetric exponential filter and differentiated;
//! every change of a vehicle's lane label opens a window of 2 s before and 5 s
//! after the change. Neighbors are identified once, at the window start, and
//! followed by identity. Lanes are straight total-least-squares fits.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{
    mean_traffic_speed, wrap_angle, AdjacentRole, AdjacentTrack, Control, Dataset, LaneGeometry, Line, Scenario, Split,
    State, Trajectory,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrack {
    pub vehicle_id: u64,
    /// 10 Hz frame numbers, strictly increasing.
    pub frames: Vec<i64>,
    /// Positions in meters; `x` lateral, `y` longitudinal.
    pub positions: Vec<[f64; 2]>,
    pub lane_ids: Vec<i64>,
}

impl RawTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.frames.len() || self.lane_ids.len() != self.frames.len() {
            return Err(Error::Shape(format!("vehicle {} has ragged columns", self.vehicle_id)));
        }
        if self.frames.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Shape(format!("vehicle {} frames are not strictly increasing", self.vehicle_id)));
        }
        if self.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                feature: None,
                step: None,
                context: format!("vehicle {} position", self.vehicle_id),
            });
        }
        Ok(())
    }
}

/// One parsed table row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRow {
    pub vehicle_id: u64,
    pub frame: i64,
    pub position: [f64; 2],
    pub lane_id: i64,
}

/// Groups rows into frame-sorted tracks, ordered by vehicle id. A repeated
/// (vehicle, frame) pair is an error naming the later data row, counted
/// from 1.
pub fn tracks_from_rows(rows: &[RawRow]) -> Result<Vec<RawTrack>> {
    let mut by_vehicle: BTreeMap<u64, Vec<(i64, usize)>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_vehicle.entry(r.vehicle_id).or_default().push((r.frame, i));
    }
    let mut tracks = Vec::with_capacity(by_vehicle.len());
    for (vehicle_id, mut entries) in by_vehicle {
        entries.sort();
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Shape(format!(
                "data row {}: vehicle {vehicle_id} repeats frame {}",
                w[0].1.max(w[1].1) + 1,
                w[0].0
            )));
        }
        let track = RawTrack {
            vehicle_id,
            frames: entries.iter().map(|e| e.0).collect(),
            positions: entries.iter().map(|e| rows[e.1].position).collect(),
            lane_ids: entries.iter().map(|e| rows[e.1].lane_id).collect(),
        };
        track.validate()?;
        tracks.push(track);
    }
    Ok(tracks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingSettings {
    /// Half-width of the filter support (s).
    pub window: f64,
    /// Exponential decay constant (s).
    pub tau: f64,
}

impl Default for SmoothingSettings {
    fn default() -> Self {
        Self { window: 0.5, tau: 0.5 / 3.0 }
    }
}

/// Symmetric exponentially weighted average over `±window`, with weights
/// truncated and renormalized near the ends.
pub fn smooth(positions: &[[f64; 2]], dt: f64, settings: &SmoothingSettings) -> Result<Vec<[f64; 2]>> {
    if !(dt > 0.0) || !(settings.window >= 0.0) || !(settings.tau > 0.0) {
        return Err(Error::Config("smoothing needs positive dt, tau and a nonnegative window".into()));
    }
    let half = (settings.window / dt + 1e-9).floor() as usize;
    let weights: Vec<f64> = (0..=half).map(|j| (-(j as f64) * dt / settings.tau).exp()).collect();
    let n = positions.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for (j, p) in positions.iter().enumerate().take(hi + 1).skip(lo) {
            let w = weights[i.abs_diff(j)];
            sx += w * p[0];
            sy += w * p[1];
            sw += w;
        }
        out.push([sx / sw, sy / sw]);
    }
    Ok(out)
}

/// Per-frame kinematics from positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    pub psi: Vec<f64>,
    pub v: Vec<f64>,
    pub omega: Vec<f64>,
}

/// Below this speed (m/s) the heading is carried forward.
pub const STATIONARY_SPEED: f64 = 1e-6;

/// Central differences (one-sided at the ends) of velocity and of the
/// unwrapped heading. A stationary frame keeps the previous heading, or
/// `initial_heading` before any motion.
pub fn differentiate(positions: &[[f64; 2]], dt: f64, initial_heading: f64) -> Result<Kinematics> {
    let n = positions.len();
    if n < 3 {
        return Err(Error::TooShort { len: n, need: 3 });
    }
    let diff = |a: usize, b: usize| -> [f64; 2] {
        let span = (b - a) as f64 * dt;
        [(positions[b][0] - positions[a][0]) / span, (positions[b][1] - positions[a][1]) / span]
    };
    let vel: Vec<[f64; 2]> = (0..n)
        .map(|i| match i {
            0 => diff(0, 1),
            _ if i == n - 1 => diff(n - 2, n - 1),
            _ => diff(i - 1, i + 1),
        })
        .collect();
    let v: Vec<f64> = vel.iter().map(|u| u[0].hypot(u[1])).collect();
    let mut psi = Vec::with_capacity(n);
    let mut last = initial_heading;
    for (u, &speed) in vel.iter().zip(&v) {
        if speed > STATIONARY_SPEED {
            let raw = u[1].atan2(u[0]);
            // Unwrap against the previous heading.
            last += wrap_angle(raw - last)?;
        }
        psi.push(last);
    }
    let omega = (0..n)
        .map(|i| match i {
            0 => (psi[1] - psi[0]) / dt,
            _ if i == n - 1 => (psi[n - 1] - psi[n - 2]) / dt,
            _ => (psi[i + 1] - psi[i - 1]) / (2.0 * dt),
        })
        .collect();
    Ok(Kinematics { psi, v, omega })
}

/// A contiguous run of a track after smoothing and differentiation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedTrack {
    pub vehicle_id: u64,
    pub frames: Vec<i64>,
    pub raw: Vec<[f64; 2]>,
    pub smoothed: Vec<[f64; 2]>,
    pub lane_ids: Vec<i64>,
    pub kinematics: Kinematics,
}

impl ProcessedTrack {
    fn index_of(&self, frame: i64) -> Option<usize> {
        let i = frame.checked_sub(*self.frames.first()?)?;
        (i >= 0 && (i as usize) < self.frames.len()).then_some(i as usize)
    }
}

/// Splits a track at frame gaps and smooths and differentiates each run of
/// at least three frames.
pub fn process_track(track: &RawTrack, dt: f64, smoothing: &SmoothingSettings) -> Result<Vec<ProcessedTrack>> {
    track.validate()?;
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=track.len() {
        if i == track.len() || track.frames[i] != track.frames[i - 1] + 1 {
            if i - start >= 3 {
                let raw = track.positions[start..i].to_vec();
                let smoothed = smooth(&raw, dt, smoothing)?;
                let kinematics = differentiate(&smoothed, dt, FRAC_PI_2)?;
                runs.push(ProcessedTrack {
                    vehicle_id: track.vehicle_id,
                    frames: track.frames[start..i].to_vec(),
                    raw,
                    smoothed,
                    lane_ids: track.lane_ids[start..i].to_vec(),
                    kinematics,
                });
            }
            start = i;
        }
    }
    Ok(runs)
}

/// Total-least-squares line through `points`.
pub fn fit_line(points: &[[f64; 2]]) -> Result<Line> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Line::new([cx, cy], [angle.cos(), angle.sin()])
}

pub const MIN_LANE_POINTS: usize = 10;

/// Straight fits of the origin and target lanes near the lane change.
///
/// `center` is the ego position at the lane change and `axis` the unit
/// direction of travel; only points within `±vicinity` along `axis` count,
/// and none from vehicle `exclude`, whose own move would bias the fits.
/// `w` is the mean distance from the origin line to the target line at the
/// longitudinal ends `extent` of the window.
pub fn fit_lanes(
    tracks: &[ProcessedTrack],
    lanes: (i64, i64),
    exclude: Option<u64>,
    center: [f64; 2],
    axis: [f64; 2],
    vicinity: f64,
    extent: (f64, f64),
) -> Result<LaneGeometry> {
    let fit = |lane: i64| -> Result<Line> {
        let pts: Vec<[f64; 2]> = tracks
            .iter()
            .filter(|t| Some(t.vehicle_id) != exclude)
            .flat_map(|t| t.smoothed.iter().zip(&t.lane_ids))
            .filter(|(p, &l)| {
                l == lane && ((p[0] - center[0]) * axis[0] + (p[1] - center[1]) * axis[1]).abs() <= vicinity
            })
            .map(|(p, _)| *p)
            .collect();
        if pts.len() < MIN_LANE_POINTS {
            return Err(Error::InsufficientData { lane, points: pts.len() });
        }
        let line = fit_line(&pts)?;
        // Orient along the direction of travel.
        if line.direction[0] * axis[0] + line.direction[1] * axis[1] < 0.0 {
            Line::new(line.point, [-line.direction[0], -line.direction[1]])
        } else {
            Ok(line)
        }
    };
    let current = fit(lanes.0)?;
    let target = fit(lanes.1)?;
    let at = |s: f64| {
        // Point on the origin line at longitudinal offset s from `center`.
        let base = current.project(center);
        let d = current.direction;
        let along = s / (d[0] * axis[0] + d[1] * axis[1]);
        target.signed_distance([base[0] + along * d[0], base[1] + along * d[1]]).abs()
    };
    let w = 0.5 * (at(extent.0) + at(extent.1));
    LaneGeometry::new(current, target, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractSettings {
    pub dt: f64,
    /// Frames kept before and after the label change.
    pub before: usize,
    pub after: usize,
    pub vicinity: f64,
    /// Neighbor samples kept before the window for predictors.
    pub lead_in: usize,
    pub smoothing: SmoothingSettings,
    /// Largest accepted distance (m) between replayed expert controls and
    /// the smoothed recording.
    pub replay_tolerance: f64,
}

impl Default for ExtractSettings {
    fn default() -> Self {
        Self {
            dt: 0.1,
            before: 20,
            after: 50,
            vicinity: 100.0,
            lead_in: 20,
            smoothing: SmoothingSettings::default(),
            replay_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub vehicle_id: u64,
    pub frame: i64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub scenarios: Vec<Scenario>,
    pub skipped: Vec<SkipRecord>,
    /// Largest replay error (m) per emitted scenario, in the same order.
    pub replay_errors: Vec<f64>,
}

/// Finds every lane-label change with full coverage and builds a scenario.
pub fn extract_lane_changes(tracks: &[ProcessedTrack], source: &str, settings: &ExtractSettings) -> Extraction {
    let mut out = Extraction::default();
    let mut by_frame: BTreeMap<i64, Vec<(usize, usize)>> = BTreeMap::new();
    for (t, track) in tracks.iter().enumerate() {
        for (i, &f) in track.frames.iter().enumerate() {
            by_frame.entry(f).or_default().push((t, i));
        }
    }
    for (ti, track) in tracks.iter().enumerate() {
        let mut last_kept: Option<i64> = None;
        for i in 1..track.frames.len() {
            if track.lane_ids[i] == track.lane_ids[i - 1] {
                continue;
            }
            let t_lc = track.frames[i];
            let skip = |reason: String| SkipRecord { vehicle_id: track.vehicle_id, frame: t_lc, reason };
            if let Some(prev) = last_kept {
                if t_lc - prev <= settings.after as i64 + settings.before as i64 {
                    out.skipped.push(skip(format!("another lane change at frame {prev} shares the window")));
                    continue;
                }
            }
            match build_scenario(tracks, ti, i, &by_frame, source, settings) {
                Ok((scenario, err)) => {
                    last_kept = Some(t_lc);
                    out.scenarios.push(scenario);
                    out.replay_errors.push(err);
                }
                Err(e) => out.skipped.push(skip(format!("{e}"))),
            }
        }
    }
    out
}

fn build_scenario(
    tracks: &[ProcessedTrack],
    ego_index: usize,
    change: usize,
    by_frame: &BTreeMap<i64, Vec<(usize, usize)>>,
    source: &str,
    settings: &ExtractSettings,
) -> Result<(Scenario, f64)> {
    let ego = &tracks[ego_index];
    let dt = settings.dt;
    let k_len = settings.before + settings.after;
    let t_lc = ego.frames[change];
    let start =
        change.checked_sub(settings.before).ok_or(Error::NotEnoughHistory { have: change, need: settings.before })?;
    if start + k_len >= ego.frames.len() {
        return Err(Error::TooShort { len: ego.frames.len() - start, need: k_len + 1 });
    }
    let origin_lane = ego.lane_ids[change - 1];
    let target_lane = ego.lane_ids[change];
    let t_s = ego.frames[start];

    // Expert controls by forward differences of the smoothed positions, which
    // Euler replay reproduces exactly.
    let p = &ego.smoothed;
    let seg = |j: usize| -> [f64; 2] { [p[start + j + 1][0] - p[start + j][0], p[start + j + 1][1] - p[start + j][1]] };
    let mut headings = Vec::with_capacity(k_len + 1);
    let mut last = ego.kinematics.psi[start];
    for j in 0..=k_len {
        if start + j + 1 >= p.len() {
            break;
        }
        let d = seg(j);
        if d[0].hypot(d[1]) > STATIONARY_SPEED * dt {
            last += wrap_angle(d[1].atan2(d[0]) - last)?;
        }
        headings.push(last);
    }
    let controls: Vec<Control> = (0..k_len)
        .map(|j| {
            let d = seg(j);
            let omega = match headings.get(j + 1) {
                Some(next) => (next - headings[j]) / dt,
                None => (headings[j] - headings[j - 1]) / dt,
            };
            Control::new(d[0].hypot(d[1]) / dt, omega)
        })
        .collect();
    let origin = p[start];
    let x0 = State::new(0.0, 0.0, wrap_angle(headings[0])?);
    let expert = Trajectory::from_controls(x0, controls, dt)?;
    let mut replay_error = 0.0f64;
    for (j, s) in expert.states.iter().enumerate() {
        let q = p[start + j + 1];
        replay_error = replay_error.max((s.x - (q[0] - origin[0])).hypot(s.y - (q[1] - origin[1])));
    }
    if replay_error > settings.replay_tolerance {
        return Err(Error::InvalidValue { what: "expert replay error", value: replay_error });
    }

    // Direction of travel and lane fits around the change point.
    let end = p[start + k_len];
    let span = [end[0] - origin[0], end[1] - origin[1]];
    let len = span[0].hypot(span[1]);
    if !(len > 0.0) {
        return Err(Error::InvalidGeometry("ego does not move over the window"));
    }
    let axis = [span[0] / len, span[1] / len];
    let center = p[change];
    let along = |q: [f64; 2]| (q[0] - center[0]) * axis[0] + (q[1] - center[1]) * axis[1];
    let lanes = fit_lanes(
        tracks,
        (origin_lane, target_lane),
        Some(ego.vehicle_id),
        center,
        axis,
        settings.vicinity,
        (along(origin), along(end)),
    )?;

    // Neighbors at the window start, nearest ahead and behind in each lane.
    let mut best: [Option<(f64, usize, usize)>; 4] = [None; 4];
    for &(t, i) in by_frame.get(&t_s).map(Vec::as_slice).unwrap_or(&[]) {
        let other = &tracks[t];
        if other.vehicle_id == ego.vehicle_id {
            continue;
        }
        let lane = other.lane_ids[i];
        let gap = along(other.smoothed[i]) - along(origin);
        let role = match (lane == origin_lane, lane == target_lane, gap > 0.0) {
            (true, _, true) => AdjacentRole::PrecedingCurrent,
            (true, _, false) => AdjacentRole::FollowingCurrent,
            (_, true, true) => AdjacentRole::PrecedingTarget,
            (_, true, false) => AdjacentRole::FollowingTarget,
            _ => continue,
        };
        let slot = &mut best[role.index()];
        if slot.map_or(true, |(g, _, _)| gap.abs() < g) {
            *slot = Some((gap.abs(), t, i));
        }
    }
    let adjacent = AdjacentRole::ALL.map(|role| {
        let mut track = AdjacentTrack::absent(role, k_len);
        let Some((_, t, _)) = best[role.index()] else { return track };
        let other = &tracks[t];
        track.vehicle_id = Some(other.vehicle_id);
        for k in 0..k_len {
            if let Some(i) = other.index_of(t_s + k as i64) {
                let q = other.smoothed[i];
                track.positions[k] = [q[0] - origin[0], q[1] - origin[1]];
                track.speeds[k] = other.kinematics.v[i];
                track.present[k] = true;
            }
        }
        if let Some(i0) = other.index_of(t_s) {
            let from = i0.saturating_sub(settings.lead_in);
            track.lead_in = other.smoothed[from..i0].iter().map(|q| [q[0] - origin[0], q[1] - origin[1]]).collect();
        }
        track
    });
    let v_d = mean_traffic_speed(&adjacent)
        .unwrap_or_else(|| expert.controls.iter().map(|c| c.v).sum::<f64>() / k_len as f64);
    let scenario = Scenario {
        id: format!("{source}-{}-{t_lc}", ego.vehicle_id),
        ego: expert,
        adjacent,
        lanes: lanes.translated([-origin[0], -origin[1]]),
        v_d,
        theta_star: None,
    };
    scenario.validate()?;
    Ok((scenario, replay_error))
}

/// Explicit scenario-to-split assignment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitSpec {
    pub assignments: BTreeMap<String, Split>,
    #[serde(default)]
    pub source: String,
}

/// FNV-1a, 64 bit.
fn fnv1a(seed: u64, text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(text.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seeded 70/15/15 assignment by id hash.
pub fn hash_split(id: &str, seed: u64) -> Split {
    let u = (fnv1a(seed, id) % 10_000) as f64 / 10_000.0;
    if u < 0.70 {
        Split::Train
    } else if u < 0.85 {
        Split::Validation
    } else {
        Split::Test
    }
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    /// Train, validation and test, in that order.
    pub datasets: [Dataset; 3],
    pub warnings: Vec<String>,
}

/// Partitions scenarios by `spec`, or by id hash when there is none.
/// Scenarios the spec does not mention are left out with a warning.
pub fn split(scenarios: Vec<Scenario>, spec: Option<&SplitSpec>, seed: u64, source: &str) -> Result<SplitOutcome> {
    let mut buckets: [Vec<Scenario>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut warnings = Vec::new();
    let mut seen = BTreeMap::new();
    for s in scenarios {
        let which = match spec {
            Some(spec) => match spec.assignments.get(&s.id) {
                Some(&split) => split,
                None => {
                    warnings.push(format!("scenario {} is not in the split spec", s.id));
                    continue;
                }
            },
            None => hash_split(&s.id, seed),
        };
        seen.insert(s.id.clone(), ());
        let slot = match which {
            Split::Train => 0,
            Split::Validation => 1,
            Split::Test => 2,
        };
        buckets[slot].push(s);
    }
    if let Some(spec) = spec {
        for id in spec.assignments.keys() {
            if !seen.contains_key(id) {
                warnings.push(format!("split spec names {id}, which was not extracted"));
            }
        }
    }
    let [train, validation, test] = buckets;
    let datasets = [
        Dataset::new(train, Split::Train, source)?,
        Dataset::new(validation, Split::Validation, source)?,
        Dataset::new(test, Split::Test, source)?,
    ];
    Ok(SplitOutcome { datasets, warnings })
}

/// Smooths and differentiates every track, then extracts scenarios.
pub fn extract_from_raw(raw: &[RawTrack], source: &str, settings: &ExtractSettings) -> Result<Extraction> {
    let mut processed = Vec::new();
    for t in raw {
        processed.extend(process_track(t, settings.dt, &settings.smoothing)?);
    }
    Ok(extract_lane_changes(&processed, source, settings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn grouping_sorts_and_rejects_repeats() {
        assert!(tracks_from_rows(&[]).unwrap().is_empty());
        let row = |v, f| RawRow { vehicle_id: v, frame: f, position: [0.0, f as f64], lane_id: 1 };
        let t = tracks_from_rows(&[row(2, 5), row(1, 3), row(2, 4), row(2, 6)]).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].frames, vec![4, 5, 6]);
        let err = tracks_from_rows(&[row(1, 1), row(1, 2), row(1, 1)]).unwrap_err();
        assert!(format!("{err}").contains("data row 3"), "{err}");
    }

    #[test]
    fn smoothing_preserves_constants_and_lines() {
        let s = SmoothingSettings::default();
        let c = smooth(&vec![[1.5, -2.0]; 12], 0.1, &s).unwrap();
        assert!(c.iter().all(|p| (p[0] - 1.5).abs() < 1e-15 && (p[1] + 2.0).abs() < 1e-15));
        let line: Vec<[f64; 2]> = (0..30).map(|i| [0.3 * i as f64, 1.2 * i as f64 - 4.0]).collect();
        let out = smooth(&line, 0.1, &s).unwrap();
        for i in 5..25 {
            assert!((out[i][0] - line[i][0]).abs() < 1e-9 && (out[i][1] - line[i][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothing_reduces_a_spike() {
        let mut pts = vec![[0.0, 0.0]; 21];
        pts[10][0] = 1.0;
        let out = smooth(&pts, 0.1, &SmoothingSettings::default()).unwrap();
        // Direct application: weight of the centre over the full window.
        let w: f64 = (-5..=5).map(|j: i32| (-(j.abs() as f64) * 0.1 / (0.5 / 3.0)).exp()).sum();
        assert!((out[10][0] - 1.0 / w).abs() < 1e-12);
        assert!(out[10][0] < 1.0);
    }

    #[test]
    fn straight_motion_kinematics() {
        let pts: Vec<[f64; 2]> = (0..20).map(|i| [0.0, i as f64]).collect();
        let k = differentiate(&pts, 0.1, 0.0).unwrap();
        for i in 1..19 {
            assert!((k.psi[i] - FRAC_PI_2).abs() < 1e-12);
            assert!((k.v[i] - 10.0).abs() < 1e-9);
            assert!(k.omega[i].abs() < 1e-9);
        }
        assert!(matches!(differentiate(&pts[..2], 0.1, 0.0), Err(Error::TooShort { .. })));
    }

    #[test]
    fn stationary_keeps_heading() {
        let mut pts: Vec<[f64; 2]> = (0..5).map(|i| [i as f64, 0.0]).collect();
        pts.extend(vec![[4.0, 0.0]; 6]);
        let k = differentiate(&pts, 0.1, 1.0).unwrap();
        assert!(k.psi.iter().all(|p| p.abs() < 1e-12));
        let still = differentiate(&[[1.0, 1.0]; 4], 0.1, 0.7).unwrap();
        assert!(still.psi.iter().all(|p| *p == 0.7) && still.v.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn circle_turn_rate() {
        let (r, v, dt) = (50.0, 10.0, 0.1);
        let pts: Vec<[f64; 2]> = (0..60)
            .map(|i| {
                let a = v / r * i as f64 * dt;
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        let k = differentiate(&pts, dt, 0.0).unwrap();
        for i in 2..58 {
            assert!((k.omega[i] - 0.2).abs() < 1e-3);
        }
    }

    #[test]
    fn lane_fits() {
        let mk = |id, x: f64, lane| ProcessedTrack {
            vehicle_id: id,
            frames: (0..20).collect(),
            raw: vec![],
            smoothed: (0..20).map(|i| [x, i as f64 * 2.0]).collect(),
            lane_ids: vec![lane; 20],
            kinematics: Kinematics { psi: vec![], v: vec![], omega: vec![] },
        };
        let g = fit_lanes(&[mk(1, 0.0, 1), mk(2, 3.7, 2)], (1, 2), None, [0.0, 20.0], [0.0, 1.0], 100.0, (-20.0, 20.0))
            .unwrap();
        assert!((g.w - 3.7).abs() < 1e-12);
        assert!(g.current_line.direction[1] > 0.999_999);
        let few = fit_lanes(&[mk(1, 0.0, 1)], (1, 2), None, [0.0, 20.0], [0.0, 1.0], 100.0, (0.0, 1.0));
        assert!(matches!(few, Err(Error::InsufficientData { lane: 2, points: 0 })));
    }

    #[test]
    fn slanted_and_noisy_lines() {
        let dir = [0.05f64, 1.0];
        let n = dir[0].hypot(dir[1]);
        let dir = [dir[0] / n, dir[1] / n];
        let normal = [-dir[1], dir[0]];
        let pts = |offset: f64, noise: &mut dyn FnMut() -> f64| -> Vec<[f64; 2]> {
            (0..500)
                .map(|i| {
                    let s = i as f64 * 0.3 - 75.0;
                    let e = noise();
                    [s * dir[0] + (offset + e) * normal[0], s * dir[1] + (offset + e) * normal[1]]
                })
                .collect()
        };
        let exact = fit_line(&pts(0.0, &mut || 0.0)).unwrap();
        assert!((exact.direction[0].abs() - dir[0]).abs() < 1e-9 && (exact.direction[1].abs() - dir[1]).abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal_dist = Normal::new(0.0, 0.1).unwrap();
        let mut noise = || normal_dist.sample(&mut rng);
        let track = |id, offset, lane, noise: &mut dyn FnMut() -> f64| {
            let sm = pts(offset, noise);
            ProcessedTrack {
                vehicle_id: id,
                frames: (0..500).collect(),
                raw: vec![],
                lane_ids: vec![lane; sm.len()],
                smoothed: sm,
                kinematics: Kinematics { psi: vec![], v: vec![], omega: vec![] },
            }
        };
        let a = track(1, 0.0, 1, &mut noise);
        let b = track(2, -3.7, 2, &mut noise);
        let g = fit_lanes(&[a, b], (1, 2), None, [0.0, 0.0], dir, 100.0, (-30.0, 30.0)).unwrap();
        assert!((g.w - 3.7).abs() < 0.05, "{}", g.w);
    }

    #[test]
    fn hash_split_is_deterministic_and_roughly_proportional() {
        let ids: Vec<String> = (0..2000).map(|i| format!("s{i}")).collect();
        let counts = ids.iter().fold([0usize; 3], |mut c, id| {
            c[match hash_split(id, 7) {
                Split::Train => 0,
                Split::Validation => 1,
                Split::Test => 2,
            }] += 1;
            c
        });
        assert!((1300..1500).contains(&counts[0]), "{counts:?}");
        assert_eq!(hash_split("abc", 1), hash_split("abc", 1));
    }
}
