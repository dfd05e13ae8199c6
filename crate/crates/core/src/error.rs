use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("wrong state space: expected {expected}, found {found}")]
    WrongSpace { expected: &'static str, found: &'static str },

    #[error("matrix is not Hermitian (max |rho - rho^dag| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("trace is {trace}, expected 1")]
    NotNormalized { trace: f64 },

    #[error("truncation guard: tail mass {tail_mass:e} exceeds {limit:e} at n_max = {n_max}")]
    Truncation { tail_mass: f64, limit: f64, n_max: usize },

    #[error("trace drifted by {drift:e} during evolution (limit {limit:e})")]
    TraceDrift { drift: f64, limit: f64 },

    #[error("non-finite matrix entry encountered")]
    NonFinite,

    #[error("singular matrix in linear solve")]
    Singular,

    #[error("fixed-point iteration did not converge after {iterations} iterations (last residual {last:e})")]
    NotConverged { iterations: u64, last: f64, history: Vec<f64> },

    #[error("trajectory aborted at atom {atom}: {source}")]
    TrajectoryAborted {
        atom: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { field, reason: reason.into() }
}
