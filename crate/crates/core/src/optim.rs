//! Box-constrained maximization with projected L-BFGS steps.
//!
//! Variables sitting on a bound with the gradient pointing outward are held
//! fixed for the quasi-Newton direction; every trial point is projected back
//! into the box and accepted by an Armijo condition on the projected step, so
//! the objective never decreases across accepted iterations.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn uniform(n: usize, lower: f64, upper: f64) -> Self {
        Self { lower: vec![lower; n], upper: vec![upper; n] }
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(lo, hi);
        }
    }

    /// Gradient with outward-pointing components on active bounds removed.
    pub fn projected_gradient(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(g)
            .enumerate()
            .map(
                |(i, (&xi, &gi))| {
                    if (xi <= self.lower[i] && gi < 0.0) || (xi >= self.upper[i] && gi > 0.0) {
                        0.0
                    } else {
                        gi
                    }
                },
            )
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentSettings {
    pub max_iterations: usize,
    /// Stop when the projected gradient norm falls to this value.
    pub grad_tol: f64,
    /// Stop when an accepted step moves no coordinate by more than this.
    pub step_tol: f64,
    pub memory: usize,
}

impl Default for AscentSettings {
    fn default() -> Self {
        Self { max_iterations: 500, grad_tol: 1e-6, step_tol: 1e-12, memory: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    IterationLimit,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentReport {
    pub iterations: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub termination: Termination,
    /// Objective after each accepted iteration, starting with the initial point.
    pub history: Vec<f64>,
    pub grad_history: Vec<f64>,
}

impl AscentReport {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::GradientTolerance | Termination::StepTolerance)
    }
}

/// Maximizes `f` over `bounds` starting from `x0`.
///
/// `f` returns the objective and its gradient. A trial point may evaluate to
/// `-∞` to signal an infeasible region; the line search backs off from it.
/// NaN values abort with [`Error::Divergence`].
pub fn maximize<F>(mut f: F, x0: &[f64], bounds: &Bounds, settings: &AscentSettings) -> Result<(Vec<f64>, AscentReport)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(settings.grad_tol > 0.0) || !(settings.step_tol > 0.0) {
        return Err(Error::Config("tolerances must be positive".into()));
    }
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { iteration: 0, trace: vec![fx] });
    }
    let mut history = vec![fx];
    let mut pg = bounds.projected_gradient(&x, &g);
    let mut grad_history = vec![norm(&pg)];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut termination = Termination::IterationLimit;

    while iterations < settings.max_iterations {
        let pg_norm = norm(&pg);
        if pg_norm <= settings.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let free: Vec<bool> = pg.iter().zip(&g).map(|(p, g)| *p != 0.0 || *g == 0.0).collect();
        let mut dir = two_loop(&pg, &memory, &free);
        if dot(&dir, &pg) <= 0.0 {
            memory.clear();
            dir = pg.clone();
        }
        let mut step = if memory.is_empty() { (1.0 / pg_norm).min(1.0) } else { 1.0 };

        let mut accepted = None;
        for attempt in 0..2 {
            for _ in 0..60 {
                let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
                bounds.project(&mut trial);
                let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let gain = dot(&g, &s);
                if gain <= 0.0 && s.iter().all(|v| *v == 0.0) {
                    break;
                }
                let (ft, gt) = f(&trial)?;
                if ft.is_nan() || gt.iter().any(|v| v.is_nan()) {
                    history.push(ft);
                    return Err(Error::Divergence { iteration: iterations + 1, trace: history });
                }
                if ft.is_finite() && ft >= fx + 1e-4 * gain && gt.iter().all(|v| v.is_finite()) {
                    accepted = Some((trial, ft, gt, s));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() || attempt == 1 || memory.is_empty() {
                break;
            }
            // Quasi-Newton direction failed; retry along the projected gradient.
            memory.clear();
            dir = pg.clone();
            step = (1.0 / pg_norm).min(1.0);
        }
        let Some((xn, fxn, gn, s)) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };
        iterations += 1;
        // Curvature pair for the negated objective.
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).max(f64::MIN_POSITIVE) {
            memory.push_back((s.clone(), y, sy));
            if memory.len() > settings.memory {
                memory.pop_front();
            }
        }
        let max_move = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        x = xn;
        fx = fxn;
        g = gn;
        pg = bounds.projected_gradient(&x, &g);
        history.push(fx);
        grad_history.push(norm(&pg));
        if max_move <= settings.step_tol {
            termination = Termination::StepTolerance;
            break;
        }
    }
    if termination == Termination::IterationLimit && norm(&pg) <= settings.grad_tol {
        termination = Termination::GradientTolerance;
    }
    debug_assert_eq!(x.len(), n);
    let report = AscentReport { iterations, value: fx, grad_norm: norm(&pg), termination, history, grad_history };
    Ok((x, report))
}

/// L-BFGS two-loop recursion restricted to the free variables.
fn two_loop(grad: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, free: &[bool]) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(free).map(|(x, &f)| if f { *x } else { 0.0 }).collect() };
    let mut q = mask(grad);
    if memory.is_empty() {
        return q;
    }
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, _) in memory.iter().rev() {
        let (s, y) = (mask(s), mask(y));
        let sy = dot(&s, &y);
        if sy <= 0.0 {
            alphas.push(0.0);
            continue;
        }
        let a = dot(&s, &q) / sy;
        for (qi, yi) in q.iter_mut().zip(&y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let (s, y, _) = memory.back().unwrap();
    let (s, y) = (mask(s), mask(y));
    let yy = dot(&y, &y);
    let gamma = if yy > 0.0 && dot(&s, &y) > 0.0 { dot(&s, &y) / yy } else { 1.0 };
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for ((s, y, _), a) in memory.iter().zip(alphas.iter().rev()) {
        let (s, y) = (mask(s), mask(y));
        let sy = dot(&s, &y);
        if sy <= 0.0 {
            continue;
        }
        let b = dot(&y, &q) / sy;
        for (qi, si) in q.iter_mut().zip(&s) {
            *qi += (a - b) * si;
        }
    }
    mask(&q)
}
