//! Forward-Euler kinematic unicycle.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::Matrix;
use crate::scenario::{wrap_angle, Control, State};

/// One Euler step: `[x + dt v cos ψ, y + dt v sin ψ, wrap(ψ + dt ω)]`.
pub fn step(x: State, u: Control, dt: f64) -> Result<State> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidValue { what: "dt", value: dt });
    }
    ensure_finite("state x", x.x)?;
    ensure_finite("state y", x.y)?;
    ensure_finite("state psi", x.psi)?;
    ensure_finite("control v", u.v)?;
    ensure_finite("control omega", u.omega)?;
    let (s, c) = x.psi.sin_cos();
    Ok(State { x: x.x + dt * u.v * c, y: x.y + dt * u.v * s, psi: wrap_angle(x.psi + dt * u.omega)? })
}

/// States after each control; `out[k] = step(out[k-1], controls[k])`.
pub fn rollout(x0: State, controls: &[Control], dt: f64) -> Result<Vec<State>> {
    if controls.is_empty() {
        return Err(Error::Shape("rollout needs at least one control".into()));
    }
    let mut out = Vec::with_capacity(controls.len());
    let mut x = x0;
    for (index, &u) in controls.iter().enumerate() {
        x = step(x, u, dt).map_err(|e| Error::Rollout { index, source: Box::new(e) })?;
        out.push(x);
    }
    Ok(out)
}

/// Unwrapped headings `ψ_0 .. ψ_{K-1}` at which each control is applied.
pub(crate) fn unwrapped_headings(x0: State, controls: &[Control], dt: f64) -> Vec<f64> {
    let mut psi = x0.psi;
    controls
        .iter()
        .map(|u| {
            let cur = psi;
            psi += dt * u.omega;
            cur
        })
        .collect()
}

/// Jacobian of the stacked states `[x_1, y_1, ψ_1, …, x_K, y_K, ψ_K]` with
/// respect to the lifted controls `[v_0, ω_0, …, v_{K-1}, ω_{K-1}]`
/// (`3K × 2K`). Computed on the unwrapped heading.
pub fn rollout_sensitivity(x0: State, controls: &[Control], dt: f64) -> Result<Matrix> {
    rollout(x0, controls, dt)?;
    let k_len = controls.len();
    let psi = unwrapped_headings(x0, controls, dt);
    let mut jac = Matrix::zeros(3 * k_len, 2 * k_len);
    // Running rows of ∂x/∂u and ∂y/∂u; state k+1 adds the k-th Euler increment.
    let mut dx = alloc::vec![0.0; 2 * k_len];
    let mut dy = alloc::vec![0.0; 2 * k_len];
    for k in 0..k_len {
        let (s, c) = psi[k].sin_cos();
        let v = controls[k].v;
        dx[2 * k] += dt * c;
        dy[2 * k] += dt * s;
        for l in 0..k {
            dx[2 * l + 1] -= dt * dt * v * s;
            dy[2 * l + 1] += dt * dt * v * c;
        }
        jac.row_mut(3 * k).copy_from_slice(&dx);
        jac.row_mut(3 * k + 1).copy_from_slice(&dy);
        let row = jac.row_mut(3 * k + 2);
        for l in 0..=k {
            row[2 * l + 1] = dt;
        }
    }
    Ok(jac)
}
