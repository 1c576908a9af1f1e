//! Comma-separated tables: vehicle tracks, prediction traces and reports.
//!
//! Rows are numbered from 1, counting data rows only.

use std::io::{Read, Write};

use lcirl_core::ingest::{tracks_from_rows, RawRow, RawTrack};
use lcirl_core::prediction::{PredictionTrace, TraceRow};
use lcirl_core::scenario::AdjacentRole;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult, Context};

pub const FEET: f64 = 0.3048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    /// `vehicle_id, frame, x, y, lane_id` in meters.
    Simple,
    /// NGSIM columns `Vehicle_ID, Frame_ID, Local_X, Local_Y, Lane_ID`, in feet.
    Ngsim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[value(name = "m")]
    #[serde(rename = "m")]
    Meters,
    #[value(name = "ft")]
    #[serde(rename = "ft")]
    Feet,
}

impl Units {
    pub fn to_meters(self) -> f64 {
        match self {
            Units::Meters => 1.0,
            Units::Feet => FEET,
        }
    }
}

impl Schema {
    pub fn default_units(self) -> Units {
        match self {
            Schema::Simple => Units::Meters,
            Schema::Ngsim => Units::Feet,
        }
    }

    pub fn columns(self) -> ColumnMap {
        match self {
            Schema::Simple => ColumnMap {
                vehicle_id: "vehicle_id".into(),
                frame: "frame".into(),
                x: "x".into(),
                y: "y".into(),
                lane_id: "lane_id".into(),
            },
            Schema::Ngsim => ColumnMap {
                vehicle_id: "Vehicle_ID".into(),
                frame: "Frame_ID".into(),
                x: "Local_X".into(),
                y: "Local_Y".into(),
                lane_id: "Lane_ID".into(),
            },
        }
    }
}

/// Header names of the five columns ingest reads; other columns are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub vehicle_id: String,
    pub frame: String,
    pub x: String,
    pub y: String,
    pub lane_id: String,
}

fn csv_error(source: &str, e: csv::Error) -> AppError {
    AppError::Input(format!("{source}: {e}"))
}

fn field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
    row: usize,
    source: &str,
) -> AppResult<T> {
    let raw =
        record.get(idx).ok_or_else(|| AppError::Input(format!("{source}: data row {row}: missing field {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| AppError::Input(format!("{source}: data row {row}, field {name}: cannot parse {raw:?}")))
}

/// Parses vehicle tracks. `source` names the input in messages.
pub fn parse_tracks<R: Read>(reader: R, columns: &ColumnMap, units: Units, source: &str) -> AppResult<Vec<RawTrack>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Headers).flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AppError::Input(format!("{source}: missing column {name}")))
    };
    let idx = [
        find(&columns.vehicle_id)?,
        find(&columns.frame)?,
        find(&columns.x)?,
        find(&columns.y)?,
        find(&columns.lane_id)?,
    ];
    let scale = units.to_meters();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(source, e))?;
        let x: f64 = field(&record, idx[2], &columns.x, row, source)?;
        let y: f64 = field(&record, idx[3], &columns.y, row, source)?;
        if !x.is_finite() || !y.is_finite() {
            return Err(AppError::Input(format!("{source}: data row {row}: non-finite position")));
        }
        rows.push(RawRow {
            vehicle_id: field(&record, idx[0], &columns.vehicle_id, row, source)?,
            frame: field(&record, idx[1], &columns.frame, row, source)?,
            position: [x * scale, y * scale],
            lane_id: field(&record, idx[4], &columns.lane_id, row, source)?,
        });
    }
    tracks_from_rows(&rows).context(source)
}

/// Writes tracks with the given column names, one row per (vehicle, frame).
pub fn write_tracks<W: Write>(writer: W, tracks: &[RawTrack], columns: &ColumnMap, units: Units) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header = [&columns.vehicle_id, &columns.frame, &columns.x, &columns.y, &columns.lane_id];
    w.write_record(header).map_err(|e| csv_error("track table", e))?;
    let scale = units.to_meters();
    for t in tracks {
        for i in 0..t.len() {
            let p = t.positions[i];
            w.write_record([
                t.vehicle_id.to_string(),
                t.frames[i].to_string(),
                (p[0] / scale).to_string(),
                (p[1] / scale).to_string(),
                t.lane_ids[i].to_string(),
            ])
            .map_err(|e| csv_error("track table", e))?;
        }
    }
    w.flush().map_err(|e| AppError::Input(format!("track table: {e}")))
}

pub const TRACE_COLUMNS: [&str; 5] = ["car_id", "issue_step", "future_step", "x_hat", "y_hat"];

fn parse_car(raw: &str) -> Option<usize> {
    raw.parse::<usize>().ok().filter(|&c| c < 4).or_else(|| AdjacentRole::from_name(raw).map(AdjacentRole::index))
}

/// Parses a prediction trace for a scenario of `steps` steps. `car_id` is a
/// role name or its index 0 to 3.
pub fn parse_trace<R: Read>(reader: R, steps: usize, source: &str) -> AppResult<PredictionTrace> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let mut idx = [0; 5];
    for (slot, name) in idx.iter_mut().zip(TRACE_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AppError::Input(format!("{source}: missing column {name}")))?;
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(source, e))?;
        let car_raw = record.get(idx[0]).unwrap_or("");
        let car = parse_car(car_raw).ok_or_else(|| {
            AppError::Input(format!("{source}: data row {row}, field car_id: unknown car {car_raw:?}"))
        })?;
        rows.push(TraceRow {
            car,
            issue_step: field(&record, idx[1], "issue_step", row, source)?,
            future_step: field(&record, idx[2], "future_step", row, source)?,
            x_hat: field(&record, idx[3], "x_hat", row, source)?,
            y_hat: field(&record, idx[4], "y_hat", row, source)?,
        });
    }
    PredictionTrace::from_rows(&rows, steps).context(source)
}

pub fn write_trace<W: Write>(writer: W, trace: &PredictionTrace) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_COLUMNS).map_err(|e| csv_error("trace", e))?;
    for r in trace.to_rows() {
        w.write_record([
            AdjacentRole::ALL[r.car].name().to_string(),
            r.issue_step.to_string(),
            r.future_step.to_string(),
            r.x_hat.to_string(),
            r.y_hat.to_string(),
        ])
        .map_err(|e| csv_error("trace", e))?;
    }
    w.flush().map_err(|e| AppError::Input(format!("trace: {e}")))
}

/// Writes rows of string cells under `header`.
pub fn write_table<W: Write>(writer: W, header: &[&str], rows: &[Vec<String>]) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header).map_err(|e| csv_error("table", e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error("table", e))?;
    }
    w.flush().map_err(|e| AppError::Input(format!("table: {e}")))
}

/// Left-aligned first column, right-aligned others, two spaces apart.
pub fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let n = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate().take(n) {
            if i > 0 {
                s.push_str("  ");
            }
            let pad = width[i] - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
