//! Parameter studies over bus capacitance, filter inductance, droop gain and
//! converter delay.
//!
//! Every grid cell is an independent evaluation. Cells run on a rayon pool of
//! the requested size and results are collected in cell order, so outputs
//! never depend on scheduling.

use std::fmt::Write as _;

use log::{debug, info};
use rayon::prelude::*;

use crate::error::{GridError, Result};
use crate::linearization::JacobianStructure;
use crate::model::MicrogridParams;
use crate::simulator::{classify, Classification, ClassifyOptions};
use crate::stability::assess_with;

/// Capacitance resolution of the minimum-capacitance scan, farad.
pub const DEFAULT_RESOLUTION: f64 = 0.2e-3;
/// Default capacitance range of the studies, farad.
pub const DEFAULT_C_RANGE: (f64, f64) = (0.1e-3, 10.0e-3);
/// Default inductance range of the studies, henry.
pub const DEFAULT_L_RANGE: (f64, f64) = (0.1e-3, 5.0e-3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// All eigenvalues of the linearization strictly in the left half-plane.
    Ssasc,
    /// Nonlinear simulation classified asymptotically stable.
    Simulation,
}

impl Criterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::Ssasc => "ssasc",
            Criterion::Simulation => "sim",
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ssasc" => Ok(Criterion::Ssasc),
            "sim" | "simulation" => Ok(Criterion::Simulation),
            other => Err(format!(
                "unknown criterion `{other}` (expected ssasc or sim)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanMode {
    /// Every capacitance step from the low end upward.
    #[default]
    Linear,
    /// Binary search on the step index. Only valid when the criterion is
    /// monotone in C over the range: once satisfied, satisfied for every
    /// larger C.
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub structure: JacobianStructure,
    pub classify: ClassifyOptions,
    pub scan: ScanMode,
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            structure: JacobianStructure::Exact,
            classify: ClassifyOptions::default(),
            scan: ScanMode::Linear,
            jobs: None,
        }
    }
}

impl SweepOptions {
    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(jobs) = self.jobs {
            builder = builder.num_threads(jobs.max(1));
        }
        builder
            .build()
            .map_err(|e| GridError::InvalidGrid(format!("cannot start worker pool: {e}")))
    }
}

/// Axes of a (C, L, D) study.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    /// Farad.
    pub c_values: Vec<f64>,
    /// Henry.
    pub l_values: Vec<f64>,
    /// p.u.
    pub d_values: Vec<f64>,
    pub criterion: Criterion,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("c_values", &self.c_values),
            ("l_values", &self.l_values),
            ("d_values", &self.d_values),
        ] {
            if axis.is_empty() {
                return Err(GridError::InvalidGrid(format!("{name} is empty")));
            }
            if axis.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(GridError::InvalidGrid(format!("{name} must be positive")));
            }
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(GridError::InvalidGrid(format!(
                    "{name} must be strictly increasing"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.c_values.len() * self.l_values.len() * self.d_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells in (D, L, C) lexicographic order.
    pub fn cells(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for &d in &self.d_values {
            for &l in &self.l_values {
                for &c in &self.c_values {
                    out.push((d, l, c));
                }
            }
        }
        out
    }
}

/// `count` points from `lo` to `hi` inclusive, evenly spaced.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Applies (C, L, D) to a base parameter set.
pub fn cell_params(base: &MicrogridParams, c: f64, l: f64, d: f64) -> MicrogridParams {
    let mut p = base.with_inductance(l).with_droop(d);
    p.capacitance = c;
    p
}

/// Whether the cell satisfies `criterion`. Cells whose equilibrium or
/// spectrum cannot be computed do not satisfy it.
pub fn satisfies(params: &MicrogridParams, criterion: Criterion, opts: &SweepOptions) -> bool {
    match criterion {
        Criterion::Ssasc => match assess_with(params, opts.structure) {
            Ok(r) => r.ssasc,
            Err(e) => {
                debug!("ssasc evaluation failed: {e}");
                false
            }
        },
        Criterion::Simulation => match classify(params, &opts.classify) {
            Ok(v) => v.classification == Classification::AsymptoticallyStable,
            Err(e) => {
                debug!("simulation failed: {e}");
                false
            }
        },
    }
}

/// Result of one minimum-capacitance scan.
#[derive(Debug, Clone, PartialEq)]
pub struct MinCapCurve {
    pub droop: f64,
    pub l_b: f64,
    pub criterion: Criterion,
    pub resolution: f64,
    pub c_range: (f64, f64),
    /// Smallest scanned C satisfying the criterion.
    pub c_min: Option<f64>,
    /// `c_min - resolution` was evaluated and failed. False when `c_min` is
    /// the first point of the scan or nothing was found.
    pub bracketed: bool,
}

fn scan_points(lo: f64, hi: f64, resolution: f64) -> Vec<f64> {
    let steps = ((hi - lo) / resolution + 1e-9).floor() as usize;
    (0..=steps).map(|k| lo + k as f64 * resolution).collect()
}

/// Smallest C in `lo, lo + res, ...` up to `hi` for which the criterion holds.
#[allow(clippy::too_many_arguments)]
pub fn min_capacitance(
    base: &MicrogridParams,
    l_b: f64,
    droop: f64,
    c_range: (f64, f64),
    resolution: f64,
    criterion: Criterion,
    opts: &SweepOptions,
) -> Result<MinCapCurve> {
    let (lo, hi) = c_range;
    if !(lo > 0.0) || !(hi >= lo) || !(resolution > 0.0) {
        return Err(GridError::InvalidGrid(format!(
            "capacitance scan needs 0 < lo <= hi and resolution > 0 (got [{lo}, {hi}] step {resolution})"
        )));
    }
    let points = scan_points(lo, hi, resolution);
    let check = |k: usize| satisfies(&cell_params(base, points[k], l_b, droop), criterion, opts);

    let found = match opts.scan {
        ScanMode::Linear => (0..points.len()).find(|&k| check(k)),
        ScanMode::Bisection => {
            let last = points.len() - 1;
            if !check(last) {
                None
            } else if check(0) {
                Some(0)
            } else {
                // check(lo) is false, check(hi) is true
                let (mut a, mut b) = (0, last);
                while b - a > 1 {
                    let mid = (a + b) / 2;
                    if check(mid) {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                Some(b)
            }
        }
    };

    Ok(MinCapCurve {
        droop,
        l_b,
        criterion,
        resolution,
        c_range,
        c_min: found.map(|k| points[k]),
        bracketed: matches!(found, Some(k) if k > 0),
    })
}

/// Minimum-capacitance curves for every (D, L) of the grid, in (D, L) order.
pub fn min_capacitance_curves(
    base: &MicrogridParams,
    grid: &SweepGrid,
    c_range: (f64, f64),
    resolution: f64,
    opts: &SweepOptions,
) -> Result<Vec<MinCapCurve>> {
    grid.validate()?;
    let cells: Vec<(f64, f64)> = grid
        .d_values
        .iter()
        .flat_map(|&d| grid.l_values.iter().map(move |&l| (d, l)))
        .collect();
    info!(
        "min-C scan: {} curves, criterion {}, C in [{:e}, {:e}] step {:e}",
        cells.len(),
        grid.criterion.as_str(),
        c_range.0,
        c_range.1,
        resolution
    );
    opts.pool()?.install(|| {
        cells
            .par_iter()
            .map(|&(d, l)| min_capacitance(base, l, d, c_range, resolution, grid.criterion, opts))
            .collect()
    })
}

pub fn minc_csv(curves: &[MinCapCurve]) -> String {
    let mut out = String::from("D,L_H,C_min_F,criterion,found\n");
    for c in curves {
        let c_min = c.c_min.map(|x| format!("{x:.17e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{:.17e},{:.17e},{},{},{}",
            c.droop,
            c.l_b,
            c_min,
            c.criterion.as_str(),
            c.c_min.is_some()
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmaxRow {
    pub op: String,
    pub droop: f64,
    pub l_b: f64,
    pub capacitance: f64,
    pub r_max: Option<f64>,
    pub error: Option<String>,
}

/// Spectral abscissa over the grid for each named operating point.
/// Rows are ordered by operating point, then (D, L, C).
pub fn rmax_map(
    operating_points: &[(String, MicrogridParams)],
    grid: &SweepGrid,
    opts: &SweepOptions,
) -> Result<Vec<RmaxRow>> {
    grid.validate()?;
    let cells = grid.cells();
    let work: Vec<(usize, (f64, f64, f64))> = (0..operating_points.len())
        .flat_map(|op| cells.iter().map(move |&cell| (op, cell)))
        .collect();
    info!("r_max map: {} cells", work.len());
    opts.pool()?.install(|| {
        Ok(work
            .par_iter()
            .map(|&(op, (d, l, c))| {
                let (name, base) = &operating_points[op];
                let result = assess_with(&cell_params(base, c, l, d), opts.structure);
                RmaxRow {
                    op: name.clone(),
                    droop: d,
                    l_b: l,
                    capacitance: c,
                    r_max: result.as_ref().ok().map(|r| r.r_max),
                    error: result.err().map(|e| e.to_string()),
                }
            })
            .collect())
    })
}

pub fn rmax_csv(rows: &[RmaxRow]) -> String {
    let mut out = String::from("op,D,L_H,C_F,r_max,error\n");
    for r in rows {
        let r_max = r.r_max.map(|x| format!("{x:.17e}")).unwrap_or_default();
        let error = r
            .error
            .as_deref()
            .map(|e| format!("\"{}\"", e.replace('"', "'")))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.17e},{:.17e},{:.17e},{},{}",
            r.op, r.droop, r.l_b, r.capacitance, r_max, error
        );
    }
    out
}

/// Counterexamples to "eigenvalue test passes ⇒ simulation is asymptotically stable"
/// for one delay value.
#[derive(Debug, Clone, PartialEq)]
pub struct TauResult {
    pub tau: f64,
    /// Cells where the eigenvalue test passed.
    pub ssasc_cells: usize,
    pub counterexamples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauTuning {
    pub results: Vec<TauResult>,
    pub tau_star: Option<f64>,
}

/// Evaluates the sufficiency implication over the grid for one `tau`.
pub fn sufficiency_check(
    operating_points: &[MicrogridParams],
    grid: &SweepGrid,
    tau: f64,
    opts: &SweepOptions,
) -> Result<TauResult> {
    grid.validate()?;
    let cells = grid.cells();
    let work: Vec<(usize, (f64, f64, f64))> = (0..operating_points.len())
        .flat_map(|op| cells.iter().map(move |&cell| (op, cell)))
        .collect();
    let outcome: Vec<(bool, bool)> = opts.pool()?.install(|| {
        work.par_iter()
            .map(|&(op, (d, l, c))| {
                let p = cell_params(&operating_points[op], c, l, d).with_tau(tau);
                if satisfies(&p, Criterion::Ssasc, opts) {
                    let ok = satisfies(&p, Criterion::Simulation, opts);
                    if !ok {
                        debug!("counterexample at tau={tau:e} D={d} L={l:e} C={c:e}");
                    }
                    (true, ok)
                } else {
                    (false, true)
                }
            })
            .collect()
    });
    Ok(TauResult {
        tau,
        ssasc_cells: outcome.iter().filter(|o| o.0).count(),
        counterexamples: outcome.iter().filter(|o| !o.1).count(),
    })
}

/// Sufficiency check for every candidate delay, ascending.
pub fn tau_sweep(
    operating_points: &[MicrogridParams],
    grid: &SweepGrid,
    tau_candidates: &[f64],
    opts: &SweepOptions,
) -> Result<TauTuning> {
    if tau_candidates.is_empty() {
        return Err(GridError::InvalidGrid("no tau candidates".into()));
    }
    if tau_candidates.iter().any(|&t| !(t > 0.0) || t > 1e-3) {
        return Err(GridError::InvalidGrid(
            "tau candidates must lie in (0, 1 ms]".into(),
        ));
    }
    if tau_candidates.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(GridError::InvalidGrid(
            "tau candidates must be strictly increasing".into(),
        ));
    }
    let results = tau_candidates
        .iter()
        .map(|&tau| {
            let r = sufficiency_check(operating_points, grid, tau, opts)?;
            info!(
                "tau={tau:e}: {} ssasc cells, {} counterexamples",
                r.ssasc_cells, r.counterexamples
            );
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let tau_star = results
        .iter()
        .find(|r| r.counterexamples == 0)
        .map(|r| r.tau);
    Ok(TauTuning { results, tau_star })
}

/// Smallest candidate delay for which the eigenvalue test is sufficient for
/// simulated stability on every cell of the grid.
pub fn tune_tau(
    operating_points: &[MicrogridParams],
    grid: &SweepGrid,
    tau_candidates: &[f64],
    opts: &SweepOptions,
) -> Result<f64> {
    tau_sweep(operating_points, grid, tau_candidates, opts)?.tau_star()
}

impl TauTuning {
    pub fn tau_star(&self) -> Result<f64> {
        self.tau_star.ok_or_else(|| GridError::NoFeasibleTau {
            best: self
                .results
                .iter()
                .map(|r| r.counterexamples)
                .min()
                .unwrap_or(0),
        })
    }
}

pub fn tau_csv(results: &[TauResult]) -> String {
    let mut out = String::from("tau_s,counterexamples\n");
    for r in results {
        let _ = writeln!(out, "{:.17e},{}", r.tau, r.counterexamples);
    }
    out
}
