//! Run configuration. TOML with strict keys; every dimensional key carries
//! its unit in the name.

use std::path::Path;

use anyhow::{bail, Context, Result};
use dcgrid_core::sweep::{linspace, DEFAULT_C_RANGE, DEFAULT_RESOLUTION};
use dcgrid_core::{ClassifyOptions, ControlParams, EssParams, MicrogridParams, SimControls};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub control: ControlSection,
    pub operating_point: OperatingPointSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_load: Option<StepLoadSection>,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub s_base_va: f64,
    pub v_nom_volt: f64,
    pub c_farad: f64,
    /// Shared by every battery branch.
    pub l_b_henry: f64,
    pub r_b_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub k_p_pu: f64,
    pub k_i_pu_per_second: f64,
    pub droop_pu: f64,
    pub tau_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPointSection {
    /// Label used in sweep outputs; defaults to the file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub p_load_pu: f64,
    pub p_fc_pu: Vec<f64>,
    /// One entry per battery branch.
    pub e_b_pu: Vec<f64>,
    pub v0_pu: f64,
    pub i0_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub t_end_seconds: f64,
    pub perturbation_pu: f64,
    pub rtol: f64,
    pub atol_pu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step_seconds: Option<f64>,
    pub sample_interval_seconds: f64,
    pub blowup_limit_pu: f64,
    pub decay_factor: f64,
    pub growth_factor: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let c = ClassifyOptions::default();
        Self {
            t_end_seconds: c.t_end,
            perturbation_pu: c.perturbation,
            rtol: c.controls.rtol,
            atol_pu: c.controls.atol,
            max_step_seconds: c.controls.max_step,
            sample_interval_seconds: c.controls.sample_interval,
            blowup_limit_pu: c.controls.blowup_limit,
            decay_factor: c.decay_factor,
            growth_factor: c.growth_factor,
        }
    }
}

impl SimulationSection {
    pub fn controls(&self) -> SimControls {
        SimControls {
            rtol: self.rtol,
            atol: self.atol_pu,
            max_step: self.max_step_seconds,
            sample_interval: self.sample_interval_seconds,
            blowup_limit: self.blowup_limit_pu,
        }
    }

    pub fn classify_options(&self) -> ClassifyOptions {
        ClassifyOptions {
            perturbation: self.perturbation_pu,
            t_end: self.t_end_seconds,
            decay_factor: self.decay_factor,
            growth_factor: self.growth_factor,
            controls: self.controls(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (key, x) in [
            ("t_end_seconds", self.t_end_seconds),
            ("rtol", self.rtol),
            ("atol_pu", self.atol_pu),
            ("sample_interval_seconds", self.sample_interval_seconds),
            ("blowup_limit_pu", self.blowup_limit_pu),
            ("growth_factor", self.growth_factor),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                bail!("simulation.{key} = {x} must be positive");
            }
        }
        if let Some(h) = self.max_step_seconds {
            if !(h > 0.0) {
                bail!("simulation.max_step_seconds = {h} must be positive");
            }
        }
        if !(self.perturbation_pu.is_finite() && self.perturbation_pu > -1.0) {
            bail!(
                "simulation.perturbation_pu = {} must exceed -1",
                self.perturbation_pu
            );
        }
        if !(self.decay_factor >= 0.0) {
            bail!(
                "simulation.decay_factor = {} must be >= 0",
                self.decay_factor
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepLoadSection {
    pub delta_p_pu: f64,
    pub t_step_seconds: f64,
    pub t_end_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Capacitance axis of `sweep-rmax` and `tune-tau`.
    pub c_farad: Vec<f64>,
    pub l_henry: Vec<f64>,
    pub d_pu: Vec<f64>,
    /// Range of the minimum-capacitance scan.
    pub c_scan_farad: [f64; 2],
    pub c_resolution_farad: f64,
    pub bisection: bool,
    pub tau_candidates_seconds: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            c_farad: linspace(DEFAULT_C_RANGE.0, DEFAULT_C_RANGE.1, 12),
            l_henry: vec![0.1e-3, 0.25e-3, 0.5e-3, 1e-3, 2e-3, 5e-3],
            d_pu: vec![0.25, 0.5, 1.0],
            c_scan_farad: [DEFAULT_C_RANGE.0, DEFAULT_C_RANGE.1],
            c_resolution_farad: DEFAULT_RESOLUTION,
            bisection: false,
            tau_candidates_seconds: (1..=10).map(|k| k as f64 * 0.1e-3).collect(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        if cfg.operating_point.name.is_none() {
            cfg.operating_point.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.simulation.validate()?;
        if let Some(s) = &self.step_load {
            if !(s.t_step_seconds >= 0.0 && s.t_step_seconds < s.t_end_seconds) {
                bail!("step_load.t_step_seconds must lie in [0, t_end_seconds)");
            }
        }
        let c = self.sweep.c_scan_farad;
        if !(c[0] > 0.0 && c[1] >= c[0]) {
            bail!("sweep.c_scan_farad must satisfy 0 < lo <= hi");
        }
        if !(self.sweep.c_resolution_farad > 0.0) {
            bail!("sweep.c_resolution_farad must be positive");
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        self.operating_point
            .name
            .clone()
            .unwrap_or_else(|| "op".to_string())
    }

    pub fn params(&self) -> Result<MicrogridParams> {
        let g = &self.grid;
        let c = &self.control;
        let op = &self.operating_point;
        let params = MicrogridParams {
            ess: op
                .e_b_pu
                .iter()
                .map(|&e_b| EssParams {
                    e_b,
                    r_b: g.r_b_pu,
                    l_b: g.l_b_henry,
                })
                .collect(),
            control: ControlParams {
                k_p: c.k_p_pu,
                k_i: c.k_i_pu_per_second,
                droop: c.droop_pu,
                v0: op.v0_pu,
                i0: op.i0_pu,
                tau: c.tau_seconds,
            },
            p_fc: op.p_fc_pu.clone(),
            p_load: op.p_load_pu,
            capacitance: g.c_farad,
            s_base: g.s_base_va,
            v_nom: g.v_nom_volt,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
