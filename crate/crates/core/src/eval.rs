//! Positional error metrics, distance diagnostics and per-step state bands.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{AdjacentTrack, Trajectory};

fn check_pair(generated: &Trajectory, expert: &Trajectory) -> Result<()> {
    if generated.horizon() != expert.horizon() {
        return Err(Error::Shape(alloc::format!("horizons differ: {} vs {}", generated.horizon(), expert.horizon())));
    }
    if (generated.dt - expert.dt).abs() > 1e-12 {
        return Err(Error::Shape(alloc::format!("time steps differ: {} vs {}", generated.dt, expert.dt)));
    }
    if generated.horizon() == 0 {
        return Err(Error::TooShort { len: 0, need: 1 });
    }
    Ok(())
}

/// Sum over steps of the positional distance.
pub fn mee_summed(generated: &Trajectory, expert: &Trajectory) -> Result<f64> {
    check_pair(generated, expert)?;
    Ok(generated.states.iter().zip(&expert.states).map(|(a, b)| (a.x - b.x).hypot(a.y - b.y)).sum())
}

/// Mean per-step positional distance.
pub fn mee(generated: &Trajectory, expert: &Trajectory) -> Result<f64> {
    Ok(mee_summed(generated, expert)? / generated.horizon() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Sample mean and standard deviation; a single value has zero spread.
pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    let n = values.len();
    if n == 0 {
        return Err(Error::TooShort { len: 0, need: 1 });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(MeanStd { mean, std, n })
}

pub fn avg_mee<'a>(pairs: impl IntoIterator<Item = (&'a Trajectory, &'a Trajectory)>) -> Result<MeanStd> {
    let values = pairs.into_iter().map(|(g, e)| mee(g, e)).collect::<Result<Vec<_>>>()?;
    mean_std(&values)
}

/// Relative reduction of `mee_w` achieved by `mee_wplus`, in percent.
pub fn improvement(mee_w: f64, mee_wplus: f64) -> Result<f64> {
    if !(mee_w > 0.0) || !mee_w.is_finite() || !mee_wplus.is_finite() {
        return Err(Error::InvalidValue { what: "baseline MEE", value: mee_w });
    }
    Ok(100.0 * (mee_w - mee_wplus) / mee_w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinDistance {
    /// `+∞` when the car is never present.
    pub distance: f64,
    pub step: Option<usize>,
    pub absent: bool,
}

/// Closest approach between the ego and an adjacent car, pairing the car's
/// position at step `k` with the ego state at which control `k` is applied.
pub fn min_distance(traj: &Trajectory, track: &AdjacentTrack) -> Result<MinDistance> {
    if track.len() != traj.horizon() {
        return Err(Error::Shape(alloc::format!("track of length {} for horizon {}", track.len(), traj.horizon())));
    }
    let mut best = MinDistance { distance: f64::INFINITY, step: None, absent: true };
    for k in 0..traj.horizon() {
        if !track.present[k] {
            continue;
        }
        let state = traj.state_before(k);
        let p = track.positions[k];
        let d = (state.x - p[0]).hypot(state.y - p[1]);
        if d < best.distance || best.absent {
            best = MinDistance { distance: d, step: Some(k), absent: false };
        }
    }
    Ok(best)
}

/// One row of a model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub trajectories: usize,
    pub mee_a: MeanStd,
    pub mee_b: MeanStd,
    pub summed_a: MeanStd,
    pub summed_b: MeanStd,
    pub improvement: f64,
}

/// Compares two sets of generated trajectories against shared experts.
pub fn report_row(
    dataset: impl Into<String>,
    experts: &[Trajectory],
    gen_a: &[Trajectory],
    gen_b: &[Trajectory],
) -> Result<ReportRow> {
    if experts.len() != gen_a.len() || experts.len() != gen_b.len() {
        return Err(Error::Shape("expert and generated sets differ in size".into()));
    }
    let per = |gen: &[Trajectory], f: fn(&Trajectory, &Trajectory) -> Result<f64>| -> Result<MeanStd> {
        let v = gen.iter().zip(experts).map(|(g, e)| f(g, e)).collect::<Result<Vec<_>>>()?;
        mean_std(&v)
    };
    let mee_a = per(gen_a, mee)?;
    let mee_b = per(gen_b, mee)?;
    Ok(ReportRow {
        dataset: dataset.into(),
        trajectories: experts.len(),
        improvement: improvement(mee_a.mean, mee_b.mean)?,
        mee_a,
        mee_b,
        summed_a: per(gen_a, mee_summed)?,
        summed_b: per(gen_b, mee_summed)?,
    })
}

/// Per-step mean and 3σ band of x, y, ψ, v and ω over a set of trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBands {
    pub mean: Vec<[f64; 5]>,
    pub lower: Vec<[f64; 5]>,
    pub upper: Vec<[f64; 5]>,
}

pub fn state_bands(trajs: &[Trajectory]) -> Result<StateBands> {
    let first = trajs.first().ok_or(Error::TooShort { len: 0, need: 1 })?;
    let k_len = first.horizon();
    if trajs.iter().any(|t| t.horizon() != k_len) {
        return Err(Error::Shape("trajectories differ in horizon".into()));
    }
    let mut bands = StateBands { mean: Vec::new(), lower: Vec::new(), upper: Vec::new() };
    let mut column = Vec::with_capacity(trajs.len());
    for k in 0..k_len {
        let (mut m, mut lo, mut hi) = ([0.0; 5], [0.0; 5], [0.0; 5]);
        for q in 0..5 {
            column.clear();
            column.extend(trajs.iter().map(|t| {
                let s = t.states[k];
                let u = t.controls[k];
                [s.x, s.y, s.psi, u.v, u.omega][q]
            }));
            let ms = mean_std(&column)?;
            m[q] = ms.mean;
            lo[q] = ms.mean - 3.0 * ms.std;
            hi[q] = ms.mean + 3.0 * ms.std;
        }
        bands.mean.push(m);
        bands.lower.push(lo);
        bands.upper.push(hi);
    }
    Ok(bands)
}
