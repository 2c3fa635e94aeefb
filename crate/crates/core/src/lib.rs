//! Small-signal stability analysis of a single-bus dc microgrid with
//! droop-controlled battery converters and constant-power loads and sources.
//!
//! The pipeline is [`solve_equilibrium`] → [`analytic_jacobian`] →
//! [`eigenvalues`], wrapped by [`assess`]. [`simulate`] and [`classify`]
//! integrate the nonlinear model directly and serve as an independent check
//! on the eigenvalue verdict; [`sweep`] runs the parameter studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibrium;
pub mod error;
pub mod linearization;
pub mod model;
pub mod simulator;
pub mod stability;
pub mod sweep;

pub use equilibrium::{solve_equilibrium, Equilibrium};
pub use error::{GridError, Result};
pub use linearization::{
    analytic_jacobian, analytic_jacobian_with, numeric_jacobian, JacobianMatrix, JacobianStructure,
};
pub use model::{
    eval_rhs, to_per_unit, ControlParams, EssParams, MicrogridParams, PerUnitModel, PerUnitScaling,
    StateLayout, StateVector,
};
pub use simulator::{
    classify, simulate, step_load, Classification, ClassifyOptions, SimControls, SimVerdict,
    Trajectory,
};
pub use stability::{assess, assess_with, eigenvalues, StabilityReport};
pub use sweep::{
    min_capacitance, min_capacitance_curves, rmax_map, tau_sweep, tune_tau, Criterion, MinCapCurve,
    RmaxRow, SweepGrid, SweepOptions, TauTuning,
};
