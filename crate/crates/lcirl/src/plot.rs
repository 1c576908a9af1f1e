//! Scene snapshot as SVG and per-step time series.
//!
//! The road runs left to right: the horizontal axis is the scenario's `y`,
//! the vertical axis its `x`, with the target lane drawn above.

use std::fmt::Write;

use lcirl_core::scenario::{AdjacentTrack, Scenario, Trajectory};

const SCALE: f64 = 8.0;
const MARGIN: f64 = 20.0;
const CAR_LENGTH: f64 = 4.5;
const CAR_WIDTH: f64 = 1.8;
const HISTORY_STEPS: usize = 20;
const HISTORY_STRIDE: usize = 4;
const EGO_COLOR: &str = "#1f4e79";
const GEN_COLORS: [&str; 4] = ["#c0392b", "#27ae60", "#8e44ad", "#d35400"];
const CAR_COLOR: &str = "#7f8c8d";

struct Frame {
    y_min: f64,
    x_max: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        ((y - self.y_min) * SCALE + MARGIN, (self.x_max - x) * SCALE + MARGIN)
    }
}

fn frame_for(scenario: &Scenario, gens: &[(String, Trajectory)]) -> Frame {
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    let mut add = |p: [f64; 2]| {
        xs.push(p[0]);
        ys.push(p[1]);
    };
    for t in std::iter::once(&scenario.ego).chain(gens.iter().map(|g| &g.1)) {
        add(t.x0.position());
        t.states.iter().for_each(|s| add(s.position()));
    }
    for track in &scenario.adjacent {
        for (p, _) in track.positions.iter().zip(&track.present).filter(|(_, &on)| on) {
            add(*p);
        }
    }
    let lanes = &scenario.lanes;
    for line in [&lanes.current_line, &lanes.target_line] {
        xs.push(line.point[0]);
    }
    let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = lanes.w;
    let (y_min, y_max) = (lo(&ys) - CAR_LENGTH, hi(&ys) + CAR_LENGTH);
    let (x_min, x_max) = (lo(&xs) - w, hi(&xs) + w);
    Frame {
        y_min,
        x_max,
        width: (y_max - y_min) * SCALE + 2.0 * MARGIN,
        height: (x_max - x_min) * SCALE + 2.0 * MARGIN,
    }
}

fn car(out: &mut String, f: &Frame, p: [f64; 2], psi: f64, color: &str, opacity: f64) {
    let (c, s) = (psi.cos(), psi.sin());
    let corners = [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)].map(|(a, b)| {
        let along = 0.5 * CAR_LENGTH * a;
        let across = 0.5 * CAR_WIDTH * b;
        f.map(p[0] + along * c - across * s, p[1] + along * s + across * c)
    });
    let pts: Vec<String> = corners.iter().map(|(u, v)| format!("{u:.2},{v:.2}")).collect();
    let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="{opacity:.2}"/>"#, pts.join(" "));
}

fn track_heading(track: &AdjacentTrack, k: usize) -> f64 {
    let pick = |a: usize, b: usize| {
        (track.present[a] && track.present[b]).then(|| {
            let (p, q) = (track.positions[a], track.positions[b]);
            (q[1] - p[1]).atan2(q[0] - p[0])
        })
    };
    let n = track.len();
    let forward = (k + 1 < n).then(|| pick(k, k + 1)).flatten();
    let backward = (k > 0).then(|| pick(k - 1, k)).flatten();
    forward.or(backward).unwrap_or(std::f64::consts::FRAC_PI_2)
}

fn history(k: usize) -> impl Iterator<Item = (usize, f64)> {
    let first = k.saturating_sub(HISTORY_STEPS);
    (first..k).step_by(HISTORY_STRIDE).map(move |j| (j, 0.1 + 0.4 * (j - first) as f64 / HISTORY_STEPS as f64))
}

/// Lanes, the expert ego, each generated ego and the adjacent cars at step
/// `k`, with fading copies over the preceding 2 s.
pub fn snapshot_svg(scenario: &Scenario, gens: &[(String, Trajectory)], k: usize) -> String {
    let f = frame_for(scenario, gens);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.2} {:.2}">"#,
        f.width,
        f.height + 20.0 * (gens.len() + 2) as f64,
        f.width,
        f.height + 20.0 * (gens.len() + 2) as f64
    );
    let _ = writeln!(out, r##"<rect width="100%" height="{:.2}" fill="#3b3b3b"/>"##, f.height);

    let lanes = &scenario.lanes;
    for line in [&lanes.current_line, &lanes.target_line] {
        let n = line.normal();
        for (offset, centre) in [(0.0, true), (0.5 * lanes.w, false), (-0.5 * lanes.w, false)] {
            let d = line.direction;
            if d[1].abs() < 1e-9 {
                continue;
            }
            let base = [line.point[0] + offset * n[0], line.point[1] + offset * n[1]];
            let at = |y: f64| {
                let t = (y - base[1]) / d[1];
                f.map(base[0] + t * d[0], y)
            };
            let (a, b) = (at(f.y_min), at(f.y_min + (f.width - 2.0 * MARGIN) / SCALE));
            let extra = if centre { r#" stroke-dasharray="6 6" stroke-opacity="0.4""# } else { "" };
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#ffffff" stroke-width="1"{extra}/>"##,
                a.0, a.1, b.0, b.1
            );
        }
    }

    for track in &scenario.adjacent {
        for (j, op) in history(k).chain(std::iter::once((k, 0.9))) {
            if track.present[j] {
                car(&mut out, &f, track.positions[j], track_heading(track, j), CAR_COLOR, op);
            }
        }
    }
    let egos = std::iter::once((EGO_COLOR, &scenario.ego))
        .chain(gens.iter().enumerate().map(|(i, g)| (GEN_COLORS[i % 4], &g.1)));
    for (color, t) in egos {
        for (j, op) in history(k).chain(std::iter::once((k, 0.9))) {
            let s = t.state_before(j);
            car(&mut out, &f, s.position(), s.psi, color, op);
        }
    }

    let labels = std::iter::once(("expert".to_string(), EGO_COLOR))
        .chain(gens.iter().enumerate().map(|(i, g)| (g.0.clone(), GEN_COLORS[i % 4])))
        .chain(std::iter::once(("adjacent".to_string(), CAR_COLOR)));
    for (i, (label, color)) in labels.enumerate() {
        let y = f.height + 15.0 + 20.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="{MARGIN}" y="{:.2}" width="12" height="12" fill="{color}"/>"#, y - 10.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{y:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            MARGIN + 18.0,
            escape(&label)
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="#ffffff" text-anchor="end">{} t = {:.1} s</text>"##,
        f.width - MARGIN,
        MARGIN,
        escape(&scenario.id),
        k as f64 * scenario.dt()
    );
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub const SERIES_HEADER: [&str; 10] = ["series", "step", "time", "x", "y", "psi", "v", "omega", "speed", "present"];

/// Long-format rows: one per step for the expert, each generated ego and
/// each adjacent slot.
pub fn time_series(scenario: &Scenario, gens: &[(String, Trajectory)]) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let dt = scenario.dt();
    let mut rows = Vec::new();
    let egos = std::iter::once(("expert".to_string(), &scenario.ego)).chain(gens.iter().map(|g| (g.0.clone(), &g.1)));
    for (label, t) in egos {
        for k in 0..t.horizon() {
            let s = t.state_before(k);
            let u = t.controls[k];
            rows.push(vec![
                label.clone(),
                k.to_string(),
                format!("{}", k as f64 * dt),
                s.x.to_string(),
                s.y.to_string(),
                s.psi.to_string(),
                u.v.to_string(),
                u.omega.to_string(),
                u.v.to_string(),
                "true".into(),
            ]);
        }
    }
    for track in &scenario.adjacent {
        for k in 0..track.len() {
            let p = track.positions[k];
            let on = track.present[k];
            let cell = |v: f64| if on { v.to_string() } else { String::new() };
            rows.push(vec![
                track.role.name().to_string(),
                k.to_string(),
                format!("{}", k as f64 * dt),
                cell(p[0]),
                cell(p[1]),
                String::new(),
                String::new(),
                String::new(),
                cell(track.speeds[k]),
                on.to_string(),
            ]);
        }
    }
    (SERIES_HEADER.to_vec(), rows)
}
