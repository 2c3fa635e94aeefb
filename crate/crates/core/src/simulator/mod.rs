//! Nonlinear time-domain simulation of the averaged grid model and
//! trajectory-based stability classification.

pub mod ode;

use std::fmt::Write as _;

use crate::equilibrium::solve_equilibrium;
use crate::error::{invalid, Result};
use crate::model::{check_state, to_per_unit, MicrogridParams, PerUnitModel, StateVector};

pub use ode::{dopri5, rk4, FnSystem, IntegratorControls, OdeSystem, Solution, Termination};

/// Integration settings for the grid model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimControls {
    pub rtol: f64,
    pub atol: f64,
    /// Step cap; `None` uses `min(tau / 5, 1e-4)`.
    pub max_step: Option<f64>,
    pub sample_interval: f64,
    pub blowup_limit: f64,
}

impl Default for SimControls {
    fn default() -> Self {
        let base = IntegratorControls::default();
        Self {
            rtol: base.rtol,
            atol: base.atol,
            max_step: None,
            sample_interval: base.sample_interval,
            blowup_limit: base.blowup_limit,
        }
    }
}

impl SimControls {
    pub fn resolve(&self, params: &MicrogridParams) -> IntegratorControls {
        IntegratorControls {
            rtol: self.rtol,
            atol: self.atol,
            max_step: self
                .max_step
                .unwrap_or_else(|| (params.control.tau / 5.0).min(1e-4)),
            sample_interval: self.sample_interval,
            blowup_limit: self.blowup_limit,
        }
    }
}

impl OdeSystem for PerUnitModel {
    fn dim(&self) -> usize {
        self.layout().dim()
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self.rhs_into(x, dx)
    }

    fn admissible(&self, x: &[f64]) -> bool {
        check_state(self.n(), x).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Seconds, strictly increasing.
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub params: MicrogridParams,
    pub termination: Termination,
}

impl Trajectory {
    pub fn divergent(&self) -> bool {
        self.termination.is_divergent()
    }

    pub fn final_state(&self) -> &StateVector {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    /// Max-abs deviation from `reference` at every sample.
    pub fn deviations(&self, reference: &StateVector) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| max_abs_diff(s.as_slice(), reference.as_slice()))
            .collect()
    }

    /// Header `t,i_B_1..n,alpha_1..n,alpha_ref_1..n,v`, `%.17e` values.
    pub fn to_csv(&self) -> String {
        let n = self.params.n();
        let mut out = String::from("t,");
        out.push_str(&StateVector::labels(n).join(","));
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{t:.17e}");
            for x in s.as_slice() {
                let _ = write!(out, ",{x:.17e}");
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn into_trajectory(params: &MicrogridParams, sol: Solution) -> Result<Trajectory> {
    let n = params.n();
    let states = sol
        .states
        .into_iter()
        .map(|s| StateVector::from_vec(n, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times: sol.times,
        states,
        params: params.clone(),
        termination: sol.termination,
    })
}

/// Integrates the nonlinear grid dynamics from `x0` over `[0, t_end]`.
///
/// Divergence (blow-up, `alpha` or `v` reaching zero) is not an error: the
/// trajectory is truncated and its termination says why.
pub fn simulate(
    params: &MicrogridParams,
    x0: &StateVector,
    t_end: f64,
    controls: &SimControls,
) -> Result<Trajectory> {
    params.validate()?;
    if !(t_end > 0.0) {
        return Err(invalid("t_end", format!("{t_end} must be > 0")));
    }
    let model = to_per_unit(params);
    check_state(model.n(), x0.as_slice())?;
    let sol = dopri5(&model, 0.0, x0.as_slice(), t_end, &controls.resolve(params))?;
    into_trajectory(params, sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    AsymptoticallyStable,
    Unstable,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    /// Relative bus-voltage disturbance applied to the equilibrium.
    pub perturbation: f64,
    pub t_end: f64,
    /// Stable when the final deviation falls below this fraction of the initial one.
    pub decay_factor: f64,
    /// Unstable when the final deviation exceeds this multiple of the initial one.
    pub growth_factor: f64,
    pub controls: SimControls,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            perturbation: 1e-2,
            t_end: 40.0,
            decay_factor: 1e-3,
            growth_factor: 10.0,
            controls: SimControls::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimVerdict {
    pub classification: Classification,
    pub initial_deviation: f64,
    /// Max-abs of `x(T) - x_eq`, p.u.
    pub final_deviation: f64,
    pub peak_deviation: f64,
    pub termination: Termination,
}

/// Perturbs the equilibrium voltage, simulates, and classifies the outcome.
pub fn classify(params: &MicrogridParams, options: &ClassifyOptions) -> Result<SimVerdict> {
    let eq = solve_equilibrium(params)?;
    let mut x0 = eq.state.clone();
    let iv = x0.layout().v();
    x0.as_mut_slice()[iv] *= 1.0 + options.perturbation;
    let traj = simulate(params, &x0, options.t_end, &options.controls)?;
    Ok(verdict(&traj, &eq.state, options))
}

/// Applies the classification rules to a finished trajectory.
pub fn verdict(
    traj: &Trajectory,
    equilibrium: &StateVector,
    options: &ClassifyOptions,
) -> SimVerdict {
    let dev = traj.deviations(equilibrium);
    let initial_deviation = dev[0];
    let final_deviation = *dev.last().expect("nonempty trajectory");
    let peak_deviation = dev.iter().copied().fold(0.0, f64::max);
    let classification =
        if traj.divergent() || !(final_deviation <= options.growth_factor * initial_deviation) {
            Classification::Unstable
        } else if final_deviation < options.decay_factor * initial_deviation {
            Classification::AsymptoticallyStable
        } else {
            Classification::Inconclusive
        };
    SimVerdict {
        classification,
        initial_deviation,
        final_deviation,
        peak_deviation,
        termination: traj.termination,
    }
}

/// Starts at the equilibrium of `params` and changes the load by `delta_p`
/// at `t_step`.
pub fn step_load(
    params: &MicrogridParams,
    delta_p: f64,
    t_step: f64,
    t_end: f64,
    controls: &SimControls,
) -> Result<Trajectory> {
    if !(t_step >= 0.0 && t_step < t_end) {
        return Err(invalid(
            "t_step",
            format!("{t_step} must lie in [0, {t_end})"),
        ));
    }
    let pre = solve_equilibrium(params)?;
    let post_params = params.with_load(params.p_load + delta_p);
    solve_equilibrium(&post_params)?;

    let ctrl = controls.resolve(params);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut termination = Termination::Completed;
    let mut x = pre.state.as_slice().to_vec();

    if t_step > 0.0 {
        let sol = dopri5(&to_per_unit(params), 0.0, &x, t_step, &ctrl)?;
        termination = sol.termination;
        times = sol.times;
        states = sol.states;
        x = states.last().expect("initial sample").clone();
    }
    if !termination.is_divergent() {
        let sol = dopri5(&to_per_unit(&post_params), t_step, &x, t_end, &ctrl)?;
        termination = sol.termination;
        let skip = usize::from(!times.is_empty());
        times.extend(sol.times.into_iter().skip(skip));
        states.extend(sol.states.into_iter().skip(skip));
    }
    into_trajectory(
        params,
        Solution {
            times,
            states,
            termination,
            accepted_steps: 0,
            rejected_steps: 0,
        },
    )
}
