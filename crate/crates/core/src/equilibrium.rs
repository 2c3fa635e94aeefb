//! Steady-state operating point of the single-bus grid.
//!
//! With shared droop settings every storage converter injects the same
//! bus-side current `i_dc`, so the steady state reduces to two quadratics:
//! the bus power balance `n v ((v0 - v)/D + i0) = P_net` for the voltage and
//! the branch KVL `R i^2 - e i + v i_dc = 0` for each battery current.

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::{GridError, Result};
use crate::linearization::jacobian_at;
use crate::model::{to_per_unit, MicrogridParams, StateVector};

/// Residual accepted for a state to count as an equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-9;

const POLISH_TOL: f64 = 1e-12;
const POLISH_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: StateVector,
    /// Max-abs of `f` at `state`, per second.
    pub residual_norm: f64,
    /// Bus-side current `i_B / alpha` of each converter, p.u.
    pub i_dc: Vec<f64>,
}

/// Roots of the bus-voltage quadratic
/// `v^2 - (v0 + D i0) v + D P_net / n = 0`, largest first.
pub fn voltage_roots(params: &MicrogridParams) -> Result<(f64, f64)> {
    let c = &params.control;
    let n = params.n() as f64;
    let b = c.v0 + c.droop * c.i0;
    let disc = b * b - 4.0 * c.droop * params.p_net() / n;
    if disc < 0.0 {
        return Err(GridError::NoPhysicalRoot {
            p_net: params.p_net(),
            discriminant: disc,
        });
    }
    let s = disc.sqrt();
    let hi = 0.5 * (b + s);
    // Vieta's formula avoids cancellation in the small root.
    let lo = if hi != 0.0 {
        c.droop * params.p_net() / n / hi
    } else {
        0.0
    };
    Ok((hi, lo))
}

fn bus_voltage(params: &MicrogridParams) -> Result<(f64, f64)> {
    let c = &params.control;
    let n = params.n();
    if c.droop == 0.0 {
        if n > 1 {
            return Err(GridError::DegenerateDroop { n });
        }
        // Integral action pins v = v0; the single unit carries the whole balance.
        return Ok((c.v0, params.p_net() / c.v0));
    }
    let (hi, lo) = voltage_roots(params)?;
    let v = [hi, lo]
        .into_iter()
        .filter(|&v| v > 0.0)
        .min_by(|a, b| (a - c.v0).abs().total_cmp(&(b - c.v0).abs()))
        .ok_or(GridError::NoPhysicalRoot {
            p_net: params.p_net(),
            discriminant: 0.0,
        })?;
    let i_dc = (c.v0 - v) / c.droop + c.i0;
    Ok((v, i_dc))
}

/// Low-current root of `R i^2 - e i + v i_dc = 0`.
pub fn branch_current(e_b: f64, r_b: f64, v: f64, i_dc: f64) -> Option<f64> {
    let disc = e_b * e_b - 4.0 * r_b * v * i_dc;
    if disc < 0.0 {
        return None;
    }
    // 2c / (-b + sqrt(disc)) form stays accurate for r_b -> 0.
    Some(2.0 * v * i_dc / (e_b + disc.sqrt()))
}

pub fn solve_equilibrium(params: &MicrogridParams) -> Result<Equilibrium> {
    params.validate()?;
    let n = params.n();
    let (v, i_dc) = bus_voltage(params)?;

    let mut i_b = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    for (j, ess) in params.ess.iter().enumerate() {
        let i = branch_current(ess.e_b, ess.r_b, v, i_dc).ok_or(GridError::BatteryOverload {
            ess: j + 1,
            discriminant: ess.e_b * ess.e_b - 4.0 * ess.r_b * v * i_dc,
        })?;
        let battery_voltage = ess.e_b - ess.r_b * i;
        if !(battery_voltage > 0.0) {
            return Err(GridError::BatteryOverload {
                ess: j + 1,
                discriminant: battery_voltage,
            });
        }
        i_b.push(i);
        alpha.push(v / battery_voltage);
    }

    let state = StateVector::from_parts(&i_b, &alpha, &alpha, v)?;
    let mut eq = finish(params, state)?;
    if eq.residual_norm > POLISH_TOL {
        debug!(
            "closed-form residual {:e} above {POLISH_TOL:e}, polishing",
            eq.residual_norm
        );
        if let Ok(polished) = polish(params, &eq.state) {
            if polished.residual_norm < eq.residual_norm {
                eq = polished;
            }
        }
    }
    if eq.residual_norm >= EQUILIBRIUM_TOL {
        return Err(GridError::NotAtEquilibrium {
            residual: eq.residual_norm,
        });
    }
    Ok(eq)
}

fn finish(params: &MicrogridParams, state: StateVector) -> Result<Equilibrium> {
    let f = to_per_unit(params).rhs(state.as_slice())?;
    let residual_norm = f.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let i_dc = state
        .i_b()
        .iter()
        .zip(state.alpha())
        .map(|(i, a)| i / a)
        .collect();
    Ok(Equilibrium {
        state,
        residual_norm,
        i_dc,
    })
}

/// Newton iterations on `f(x) = 0` with the exact Jacobian.
pub fn polish(params: &MicrogridParams, start: &StateVector) -> Result<Equilibrium> {
    let model = to_per_unit(params);
    let n = params.n();
    let mut x = start.as_slice().to_vec();
    for _ in 0..POLISH_MAX_ITER {
        let f = model.rhs(&x)?;
        let norm = f.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if norm < POLISH_TOL {
            break;
        }
        let jac = jacobian_at(&model, &x)?;
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|d| -d));
        let step = DMatrix::from(jac)
            .lu()
            .solve(&rhs)
            .ok_or(GridError::NotAtEquilibrium { residual: norm })?;
        for (xi, di) in x.iter_mut().zip(step.iter()) {
            *xi += di;
        }
    }
    finish(params, StateVector::from_vec(n, x)?)
}
