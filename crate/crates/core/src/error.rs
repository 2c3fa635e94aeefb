use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("state vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular state: {quantity} = {value} must be strictly positive")]
    SingularState { quantity: String, value: f64 },

    #[error("no physical bus voltage: the droop characteristic cannot supply a net load of {p_net} p.u. (discriminant {discriminant})")]
    NoPhysicalRoot { p_net: f64, discriminant: f64 },

    #[error("battery {ess} overloaded: branch discriminant {discriminant} < 0")]
    BatteryOverload { ess: usize, discriminant: f64 },

    #[error("zero droop gain with {n} storage units leaves current sharing undetermined")]
    DegenerateDroop { n: usize },

    #[error("state is not an equilibrium (residual {residual:e})")]
    NotAtEquilibrium { residual: f64 },

    #[error("eigenvalue iteration did not converge for a {dim}x{dim} matrix")]
    ConvergenceFailure { dim: usize },

    #[error("no candidate time constant satisfies sufficiency (fewest counterexamples: {best})")]
    NoFeasibleTau { best: usize },

    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T> = std::result::Result<T, GridError>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> GridError {
    GridError::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
