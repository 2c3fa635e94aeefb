//! Grid parameterization, state layout and the averaged nonlinear dynamics.
//!
//! Electrical quantities are per-unit on (`s_base`, `v_nom`); time is in
//! seconds. Physical inductances and the bus capacitance are converted to
//! time constants through the impedance base, see [`PerUnitScaling`].
//!
//! State layout for `n` storage branches is
//! `[i_B(1..n) | alpha(1..n) | alpha_ref(1..n) | v]`.

use std::ops::Range;

use crate::error::{invalid, GridError, Result};

/// One battery branch: open-circuit voltage and series R-L filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssParams {
    /// Open-circuit voltage, p.u.
    pub e_b: f64,
    /// Internal plus filter resistance, p.u.
    pub r_b: f64,
    /// Filter inductance, henry.
    pub l_b: f64,
}

impl EssParams {
    pub fn new(e_b: f64, r_b: f64, l_b: f64) -> Result<Self> {
        let ess = Self { e_b, r_b, l_b };
        ess.validate()?;
        Ok(ess)
    }

    pub fn validate(&self) -> Result<()> {
        positive("e_b", self.e_b)?;
        non_negative("r_b", self.r_b)?;
        positive("l_b", self.l_b)
    }
}

/// PI + droop primary control, shared by every storage converter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams {
    pub k_p: f64,
    /// Integral gain, p.u. per second.
    pub k_i: f64,
    /// Droop coefficient, p.u.
    pub droop: f64,
    /// Idle voltage, p.u.
    pub v0: f64,
    /// Idle current, p.u.
    pub i0: f64,
    /// First-order converter delay, seconds.
    pub tau: f64,
}

impl ControlParams {
    pub fn validate(&self) -> Result<()> {
        non_negative("k_p", self.k_p)?;
        positive("k_i", self.k_i)?;
        non_negative("droop", self.droop)?;
        positive("v0", self.v0)?;
        finite("i0", self.i0)?;
        positive("tau", self.tau)
    }
}

/// Complete description of a single-bus grid and its operating point inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridParams {
    pub ess: Vec<EssParams>,
    pub control: ControlParams,
    /// Fuel-cell injections (constant-power sources), p.u.
    pub p_fc: Vec<f64>,
    /// Constant-power load, p.u.
    pub p_load: f64,
    /// Bus capacitance, farad.
    pub capacitance: f64,
    /// Base power, watt.
    pub s_base: f64,
    /// Nominal voltage, volt.
    pub v_nom: f64,
}

impl MicrogridParams {
    pub fn validate(&self) -> Result<()> {
        if self.ess.is_empty() {
            return Err(invalid("ess", "at least one storage branch is required"));
        }
        for ess in &self.ess {
            ess.validate()?;
        }
        self.control.validate()?;
        for &p in &self.p_fc {
            non_negative("p_fc", p)?;
        }
        non_negative("p_load", self.p_load)?;
        positive("capacitance", self.capacitance)?;
        positive("s_base", self.s_base)?;
        positive("v_nom", self.v_nom)
    }

    /// Number of storage branches.
    pub fn n(&self) -> usize {
        self.ess.len()
    }

    pub fn dim(&self) -> usize {
        StateLayout::new(self.n()).dim()
    }

    pub fn p_fc_total(&self) -> f64 {
        self.p_fc.iter().sum()
    }

    /// Net power the storage units must deliver at steady state.
    pub fn p_net(&self) -> f64 {
        self.p_load - self.p_fc_total()
    }

    pub fn scaling(&self) -> PerUnitScaling {
        PerUnitScaling::new(self.s_base, self.v_nom)
    }

    pub fn with_capacitance(&self, capacitance: f64) -> Self {
        Self {
            capacitance,
            ..self.clone()
        }
    }

    /// Sets every branch inductance to `l_b` (identical filters).
    pub fn with_inductance(&self, l_b: f64) -> Self {
        let mut p = self.clone();
        for ess in &mut p.ess {
            ess.l_b = l_b;
        }
        p
    }

    pub fn with_droop(&self, droop: f64) -> Self {
        let mut p = self.clone();
        p.control.droop = droop;
        p
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        let mut p = self.clone();
        p.control.tau = tau;
        p
    }

    pub fn with_load(&self, p_load: f64) -> Self {
        Self {
            p_load,
            ..self.clone()
        }
    }
}

/// Conversion between physical L/C and per-unit time constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerUnitScaling {
    /// Impedance base, ohm.
    pub z_base: f64,
}

impl PerUnitScaling {
    pub fn new(s_base: f64, v_nom: f64) -> Self {
        Self {
            z_base: v_nom * v_nom / s_base,
        }
    }

    /// Inductance (H) to time constant (s).
    pub fn l_pu(&self, l: f64) -> f64 {
        l / self.z_base
    }

    /// Capacitance (F) to time constant (s).
    pub fn c_pu(&self, c: f64) -> f64 {
        c * self.z_base
    }

    pub fn l_physical(&self, l_pu: f64) -> f64 {
        l_pu * self.z_base
    }

    pub fn c_physical(&self, c_pu: f64) -> f64 {
        c_pu / self.z_base
    }
}

/// Index ranges of the four state blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n: usize,
}

impl StateLayout {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn dim(&self) -> usize {
        3 * self.n + 1
    }

    pub fn i_b(&self) -> Range<usize> {
        0..self.n
    }

    pub fn alpha(&self) -> Range<usize> {
        self.n..2 * self.n
    }

    pub fn alpha_ref(&self) -> Range<usize> {
        2 * self.n..3 * self.n
    }

    pub fn v(&self) -> usize {
        3 * self.n
    }

    /// Block `k` (0-based: currents, alpha, alpha_ref, voltage).
    pub fn block(&self, k: usize) -> Range<usize> {
        match k {
            0 => self.i_b(),
            1 => self.alpha(),
            2 => self.alpha_ref(),
            3 => self.v()..self.v() + 1,
            _ => panic!("state has four blocks, got index {k}"),
        }
    }
}

/// Dynamic state `[i_B | alpha | alpha_ref | v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    data: Vec<f64>,
}

impl StateVector {
    pub fn from_parts(i_b: &[f64], alpha: &[f64], alpha_ref: &[f64], v: f64) -> Result<Self> {
        let n = i_b.len();
        if alpha.len() != n || alpha_ref.len() != n {
            return Err(GridError::DimensionMismatch {
                expected: n,
                got: alpha.len().max(alpha_ref.len()),
            });
        }
        let mut data = Vec::with_capacity(3 * n + 1);
        data.extend_from_slice(i_b);
        data.extend_from_slice(alpha);
        data.extend_from_slice(alpha_ref);
        data.push(v);
        Ok(Self { n, data })
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        let expected = 3 * n + 1;
        if data.len() != expected {
            return Err(GridError::DimensionMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.n)
    }

    pub fn i_b(&self) -> &[f64] {
        &self.data[self.layout().i_b()]
    }

    pub fn alpha(&self) -> &[f64] {
        &self.data[self.layout().alpha()]
    }

    pub fn alpha_ref(&self) -> &[f64] {
        &self.data[self.layout().alpha_ref()]
    }

    pub fn v(&self) -> f64 {
        self.data[3 * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Component names in layout order, 1-based branch indices.
    pub fn labels(n: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(3 * n + 1);
        out.extend((1..=n).map(|j| format!("i_B_{j}")));
        out.extend((1..=n).map(|j| format!("alpha_{j}")));
        out.extend((1..=n).map(|j| format!("alpha_ref_{j}")));
        out.push("v".to_string());
        out
    }
}

/// Storage branch with its inductance expressed as a time constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPu {
    pub e_b: f64,
    pub r_b: f64,
    /// L_B / z_base, seconds.
    pub l_pu: f64,
}

/// Parameter set in the form the dynamics are evaluated in.
#[derive(Debug, Clone, PartialEq)]
pub struct PerUnitModel {
    pub branches: Vec<BranchPu>,
    pub control: ControlParams,
    pub p_fc_total: f64,
    pub p_load: f64,
    /// C · z_base, seconds.
    pub c_pu: f64,
    pub scaling: PerUnitScaling,
}

pub fn to_per_unit(params: &MicrogridParams) -> PerUnitModel {
    let scaling = params.scaling();
    PerUnitModel {
        branches: params
            .ess
            .iter()
            .map(|ess| BranchPu {
                e_b: ess.e_b,
                r_b: ess.r_b,
                l_pu: scaling.l_pu(ess.l_b),
            })
            .collect(),
        control: params.control,
        p_fc_total: params.p_fc_total(),
        p_load: params.p_load,
        c_pu: scaling.c_pu(params.capacitance),
        scaling,
    }
}

impl PerUnitModel {
    pub fn n(&self) -> usize {
        self.branches.len()
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.n())
    }

    /// Bus voltage derivative; `x` must already be checked.
    fn bus_derivative(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let v = x[3 * n];
        let injected: f64 = (0..n).map(|j| x[j] / x[n + j]).sum();
        (injected + (self.p_fc_total - self.p_load) / v) / self.c_pu
    }

    /// Writes `f(x)` into `out`. Both slices have length `3n + 1`.
    pub fn rhs_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n();
        let dim = 3 * n + 1;
        if x.len() != dim || out.len() != dim {
            return Err(GridError::DimensionMismatch {
                expected: dim,
                got: if x.len() != dim { x.len() } else { out.len() },
            });
        }
        check_state(n, x)?;

        let ControlParams {
            k_p,
            k_i,
            droop,
            v0,
            i0,
            tau,
        } = self.control;
        let v = x[3 * n];
        let f_v = self.bus_derivative(x);

        for (j, br) in self.branches.iter().enumerate() {
            let i = x[j];
            let a = x[n + j];
            let a_ref = x[2 * n + j];

            let f_i = (br.e_b - br.r_b * i - v / a) / br.l_pu;
            let f_a = (a_ref - a) / tau;
            // d/dt (i / alpha), expanded through the branch and delay equations
            let g = f_i / a - i * f_a / (a * a);
            let f_r = k_p * (-f_v - droop * g) + k_i * (v0 - v - droop * (i / a - i0));

            out[j] = f_i;
            out[n + j] = f_a;
            out[2 * n + j] = f_r;
        }
        out[3 * n] = f_v;
        Ok(())
    }

    pub fn rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.rhs_into(x, &mut out)?;
        Ok(out)
    }
}

/// Nonlinear right-hand side `f(x)`, per second.
pub fn eval_rhs(params: &MicrogridParams, x: &StateVector) -> Result<Vec<f64>> {
    if x.n() != params.n() {
        return Err(GridError::DimensionMismatch {
            expected: params.dim(),
            got: x.as_slice().len(),
        });
    }
    to_per_unit(params).rhs(x.as_slice())
}

pub(crate) fn check_state(n: usize, x: &[f64]) -> Result<()> {
    for j in 0..n {
        let a = x[n + j];
        if !(a > 0.0) {
            return Err(GridError::SingularState {
                quantity: format!("alpha_{}", j + 1),
                value: a,
            });
        }
    }
    let v = x[3 * n];
    if !(v > 0.0) {
        return Err(GridError::SingularState {
            quantity: "v".to_string(),
            value: v,
        });
    }
    Ok(())
}

fn finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{x} is not finite")))
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    finite(name, x)?;
    if x > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{x} must be > 0")))
    }
}

fn non_negative(name: &str, x: f64) -> Result<()> {
    finite(name, x)?;
    if x >= 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{x} must be >= 0")))
    }
}

/// Reference parameter sets used by tests, benches and the shipped configs.
pub mod presets {
    use super::*;

    pub const S_BASE: f64 = 1.0e6;
    pub const V_NOM: f64 = 750.0;
    pub const K_P: f64 = 2.0;
    pub const K_I: f64 = 1.0;
    pub const R_B: f64 = 0.0177;
    pub const TAU: f64 = 0.9e-3;

    /// Two identical batteries, three fuel cells at 0.65 p.u., load 2.95 p.u.
    /// `i0 = 0.5` places the equilibrium at `v = v0`.
    pub fn operating_point_1(capacitance: f64, l_b: f64, droop: f64) -> MicrogridParams {
        MicrogridParams {
            ess: vec![
                EssParams {
                    e_b: 0.924,
                    r_b: R_B,
                    l_b,
                };
                2
            ],
            control: ControlParams {
                k_p: K_P,
                k_i: K_I,
                droop,
                v0: 1.0,
                i0: 0.5,
                tau: TAU,
            },
            p_fc: vec![0.65; 3],
            p_load: 2.95,
            capacitance,
            s_base: S_BASE,
            v_nom: V_NOM,
        }
    }

    /// Second operating point with the fuel-cell total that matches the
    /// tabulated battery current: two units at 0.35 p.u. (0.70 p.u.), not
    /// three. With `i0 = 0.25` the bus sits at `v = v0`.
    pub fn operating_point_2(capacitance: f64, l_b: f64, droop: f64) -> MicrogridParams {
        MicrogridParams {
            ess: vec![
                EssParams {
                    e_b: 0.935,
                    r_b: R_B,
                    l_b,
                };
                2
            ],
            control: ControlParams {
                k_p: K_P,
                k_i: K_I,
                droop,
                v0: 1.0,
                i0: 0.25,
                tau: TAU,
            },
            p_fc: vec![0.35; 2],
            p_load: 1.2,
            capacitance,
            s_base: S_BASE,
            v_nom: V_NOM,
        }
    }
}
