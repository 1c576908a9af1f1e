//! Adjacent-vehicle predictors and the rolling unpredictability metric.
//!
//! For car `i` at step `k`, `z[i][k]` is the mean Euclidean error over steps
//! `k - t_n + 1 ..= k` of the single forecast issued at `k - t_n`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{AdjacentRole, AdjacentTrack, Scenario};

/// Default lookback: 0.2 s at 10 Hz.
pub const DEFAULT_LOOKBACK: usize = 2;

/// Forecasts future positions from a position history sampled every `dt`.
pub trait Predictor {
    /// Minimum number of history samples needed.
    fn min_history(&self) -> usize;

    /// Positions at `1 ..= horizon` steps after the last history sample.
    fn predict(&self, history: &[[f64; 2]], horizon: usize, dt: f64) -> Result<Vec<[f64; 2]>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantVelocity;

#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantAcceleration;

/// Constant-velocity extrapolation with the velocity taken from the last two
/// samples.
pub fn cv_predict(history: &[[f64; 2]], horizon: usize, dt: f64) -> Result<Vec<[f64; 2]>> {
    ConstantVelocity.predict(history, horizon, dt)
}

impl Predictor for ConstantVelocity {
    fn min_history(&self) -> usize {
        2
    }

    fn predict(&self, history: &[[f64; 2]], horizon: usize, dt: f64) -> Result<Vec<[f64; 2]>> {
        if history.len() < 2 {
            return Err(Error::NotEnoughHistory { have: history.len(), need: 2 });
        }
        let p = history[history.len() - 1];
        let q = history[history.len() - 2];
        let vel = [(p[0] - q[0]) / dt, (p[1] - q[1]) / dt];
        Ok((1..=horizon)
            .map(|s| {
                let t = s as f64 * dt;
                [p[0] + t * vel[0], p[1] + t * vel[1]]
            })
            .collect())
    }
}

impl Predictor for ConstantAcceleration {
    fn min_history(&self) -> usize {
        3
    }

    fn predict(&self, history: &[[f64; 2]], horizon: usize, dt: f64) -> Result<Vec<[f64; 2]>> {
        let n = history.len();
        if n < 3 {
            return Err(Error::NotEnoughHistory { have: n, need: 3 });
        }
        let (p, q, r) = (history[n - 1], history[n - 2], history[n - 3]);
        // Second-order backward differences, exact for quadratic motion.
        let vel = [(3.0 * p[0] - 4.0 * q[0] + r[0]) / (2.0 * dt), (3.0 * p[1] - 4.0 * q[1] + r[1]) / (2.0 * dt)];
        let acc = [(p[0] - 2.0 * q[0] + r[0]) / (dt * dt), (p[1] - 2.0 * q[1] + r[1]) / (dt * dt)];
        Ok((1..=horizon)
            .map(|s| {
                let t = s as f64 * dt;
                [p[0] + t * vel[0] + 0.5 * t * t * acc[0], p[1] + t * vel[1] + 0.5 * t * t * acc[1]]
            })
            .collect())
    }
}

/// Forecasts per adjacent car (indexed like [`Scenario::adjacent`]) and per
/// issue step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    pub horizon: usize,
    /// `forecasts[car][k]` holds positions for steps `k+1 ..= k+horizon`.
    pub forecasts: [Vec<Option<Vec<[f64; 2]>>>; 4],
}

/// One row of a tabular trace file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub car: usize,
    pub issue_step: usize,
    pub future_step: usize,
    pub x_hat: f64,
    pub y_hat: f64,
}

impl PredictionTrace {
    pub fn empty(steps: usize, horizon: usize) -> Self {
        Self { horizon, forecasts: core::array::from_fn(|_| vec![None; steps]) }
    }

    pub fn forecast(&self, car: usize, issue_step: usize) -> Option<&[[f64; 2]]> {
        self.forecasts[car].get(issue_step)?.as_deref()
    }

    /// Runs `predictor` at every step of every track.
    ///
    /// The history at step `k` is the unbroken run of present samples ending
    /// at `k`, extended by the track's lead-in when that run reaches step 0.
    /// Steps with too little history get no forecast.
    pub fn from_predictor<P: Predictor + ?Sized>(scenario: &Scenario, predictor: &P, horizon: usize) -> Result<Self> {
        let steps = scenario.horizon();
        let dt = scenario.dt();
        let mut trace = Self::empty(steps, horizon);
        for (car, track) in scenario.adjacent.iter().enumerate() {
            for k in 0..steps {
                let history = history_at(track, k);
                if history.len() < predictor.min_history() {
                    continue;
                }
                let forecast = predictor.predict(&history, horizon, dt)?;
                if forecast.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                    return Err(Error::NonFinite {
                        feature: None,
                        step: Some(k),
                        context: format!("forecast for car {car}"),
                    });
                }
                trace.forecasts[car][k] = Some(forecast);
            }
        }
        Ok(trace)
    }

    /// Assembles a trace from file rows, checking that every forecast covers
    /// `issue+1 ..= issue+h` with a single `h` shared by the whole file.
    pub fn from_rows(rows: &[TraceRow], steps: usize) -> Result<Self> {
        let mut grouped: [Vec<Vec<(usize, usize, [f64; 2])>>; 4] = core::array::from_fn(|_| vec![Vec::new(); steps]);
        for (i, r) in rows.iter().enumerate() {
            if r.car >= 4 {
                return Err(Error::Shape(format!("data row {}: car index {} out of range", i + 1, r.car)));
            }
            if r.issue_step >= steps {
                return Err(Error::Shape(format!(
                    "data row {}: issue step {} beyond horizon {steps}",
                    i + 1,
                    r.issue_step
                )));
            }
            if r.future_step <= r.issue_step {
                return Err(Error::Shape(format!("data row {}: future step must follow issue step", i + 1)));
            }
            if !r.x_hat.is_finite() || !r.y_hat.is_finite() {
                return Err(Error::Shape(format!("data row {}: non-finite coordinate", i + 1)));
            }
            grouped[r.car][r.issue_step].push((i, r.future_step, [r.x_hat, r.y_hat]));
        }
        let mut horizon = None;
        let mut trace = Self::empty(steps, 0);
        for car in 0..4 {
            for k in 0..steps {
                let group = &mut grouped[car][k];
                if group.is_empty() {
                    continue;
                }
                group.sort_by_key(|g| g.1);
                for (n, &(row, future, _)) in group.iter().enumerate() {
                    if future != k + 1 + n {
                        return Err(Error::Shape(format!(
                            "data row {}: car {car} issue {k} expected future step {}, found {future}",
                            row + 1,
                            k + 1 + n
                        )));
                    }
                }
                let h = *horizon.get_or_insert(group.len());
                if group.len() != h {
                    return Err(Error::Shape(format!(
                        "data row {}: car {car} issue {k} has {} future points, expected {h}",
                        group[0].0 + 1,
                        group.len()
                    )));
                }
                trace.forecasts[car][k] = Some(group.iter().map(|g| g.2).collect());
            }
        }
        trace.horizon = horizon.unwrap_or(0);
        Ok(trace)
    }

    pub fn to_rows(&self) -> Vec<TraceRow> {
        let mut rows = Vec::new();
        for (car, per_step) in self.forecasts.iter().enumerate() {
            for (k, f) in per_step.iter().enumerate() {
                if let Some(points) = f {
                    for (s, p) in points.iter().enumerate() {
                        rows.push(TraceRow { car, issue_step: k, future_step: k + 1 + s, x_hat: p[0], y_hat: p[1] });
                    }
                }
            }
        }
        rows
    }
}

fn history_at(track: &AdjacentTrack, k: usize) -> Vec<[f64; 2]> {
    if !track.present[k] {
        return Vec::new();
    }
    let mut start = k;
    while start > 0 && track.present[start - 1] {
        start -= 1;
    }
    let mut history = Vec::with_capacity(k - start + 1 + track.lead_in.len());
    if start == 0 {
        history.extend_from_slice(&track.lead_in);
    }
    history.extend_from_slice(&track.positions[start..=k]);
    history
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnpredictabilitySeries {
    pub t_n: usize,
    /// `z[car][k]`, indexed like [`Scenario::adjacent`].
    pub z: [Vec<f64>; 4],
}

impl UnpredictabilitySeries {
    pub fn zeros(steps: usize, t_n: usize) -> Self {
        Self { t_n, z: core::array::from_fn(|_| vec![0.0; steps]) }
    }

    pub fn of(&self, role: AdjacentRole) -> &[f64] {
        &self.z[role.index()]
    }
}

fn window_is_observed(truth: &AdjacentTrack, issue: usize, k: usize) -> bool {
    (issue..=k).all(|j| truth.present[j])
}

fn mean_error(forecast: &[[f64; 2]], truth: &AdjacentTrack, issue: usize, t_n: usize) -> f64 {
    let total: f64 = (1..=t_n)
        .map(|s| {
            let p = truth.positions[issue + s];
            let q = forecast[s - 1];
            (p[0] - q[0]).hypot(p[1] - q[1])
        })
        .sum();
    total / t_n as f64
}

/// Unpredictability of one car from a trace.
///
/// Steps before `t_n`, and steps where the car is not observed over the whole
/// window, are 0. Any other step whose issuing forecast is missing is an
/// error.
pub fn unpredictability(trace: &PredictionTrace, truth: &AdjacentTrack, car: usize, t_n: usize) -> Result<Vec<f64>> {
    if t_n == 0 {
        return Err(Error::Config("lookback t_n must be at least one step".into()));
    }
    if trace.horizon < t_n {
        return Err(Error::Config(format!("trace horizon {} shorter than lookback {t_n}", trace.horizon)));
    }
    let steps = truth.len();
    let mut z = vec![0.0; steps];
    for k in t_n..steps {
        let issue = k - t_n;
        if !window_is_observed(truth, issue, k) {
            continue;
        }
        let forecast = trace.forecast(car, issue).ok_or(Error::TraceGap { car, issue_step: issue })?;
        z[k] = mean_error(forecast, truth, issue, t_n);
    }
    Ok(z)
}

/// Unpredictability of every adjacent car under `predictor`.
///
/// Unlike [`unpredictability`], steps whose issuing forecast could not be
/// made for lack of history are set to 0 instead of failing.
pub fn scenario_unpredictability<P: Predictor + ?Sized>(
    scenario: &Scenario,
    predictor: &P,
    t_n: usize,
) -> Result<UnpredictabilitySeries> {
    let trace = PredictionTrace::from_predictor(scenario, predictor, t_n)?;
    series_from_trace(scenario, &trace, t_n, false)
}

/// Applies [`unpredictability`] to all four cars. With `strict == false`,
/// missing forecasts yield 0 rather than an error.
pub fn series_from_trace(
    scenario: &Scenario,
    trace: &PredictionTrace,
    t_n: usize,
    strict: bool,
) -> Result<UnpredictabilitySeries> {
    let mut series = UnpredictabilitySeries::zeros(scenario.horizon(), t_n);
    for (car, track) in scenario.adjacent.iter().enumerate() {
        series.z[car] = if strict {
            unpredictability(trace, track, car, t_n)?
        } else {
            if trace.horizon < t_n {
                return Err(Error::Config(format!("trace horizon {} shorter than lookback {t_n}", trace.horizon)));
            }
            let mut z = vec![0.0; track.len()];
            for k in t_n..track.len() {
                let issue = k - t_n;
                if let (true, Some(f)) = (window_is_observed(track, issue, k), trace.forecast(car, issue)) {
                    z[k] = mean_error(f, track, issue, t_n);
                }
            }
            z
        };
    }
    Ok(series)
}
