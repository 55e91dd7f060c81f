use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension {0} is not implemented (only d = 2 is supported)")]
    UnsupportedDimension(usize),

    #[error("log factor undefined for h_min = {0} (requires h_min < 1)")]
    LogFactorDomain(f64),

    #[error("field has {found} coefficients but the dof map has {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("linear solver failed: {0}")]
    LinearSolve(String),

    #[error("newton iteration did not converge in {iterations} iterations (last residual {last_residual:.3e})")]
    NewtonNonConvergence {
        iterations: usize,
        last_residual: f64,
        residuals: Vec<f64>,
        last_iterate: Vec<f64>,
    },

    #[error("time step {step} (t = {t}) failed: {source}")]
    StepFailure {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("gradient flow did not reach stationarity within {steps} steps (last change {last_change:.3e})")]
    FlowNonConvergence {
        steps: usize,
        last_change: f64,
        energies: Vec<f64>,
    },

    #[error("convergence levels are not nested: {0}")]
    NonNestedLevels(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
