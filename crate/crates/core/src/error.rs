//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model, d-sequence or run configuration failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A matrix passed as a transposed intensity matrix has a column whose
    /// entries do not sum to zero.
    #[error("invalid generator: column {index} sums to {sum:e}")]
    InvalidGenerator { index: usize, sum: f64 },

    /// The requested computation only makes sense for a different model mode
    /// (e.g. a decay parameter for an inhomogeneous chain).
    #[error("unsupported mode: {0}")]
    Unsupported(String),

    /// The ODE integrator could not meet its contract.
    #[error("solver failure: {0}")]
    Solver(String),

    /// State-space doubling hit the cap before the output curves settled.
    #[error("truncation cap {cap} exceeded without meeting tolerance {tol:e}")]
    TruncationCap { cap: usize, tol: f64 },

    /// A stated precondition of a bound does not hold for the given inputs.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The thinning dominator turned out to be smaller than an actual total
    /// transition rate; the simulation would be biased, so it aborts.
    #[error("dominating rate underestimated: total rate {total} exceeds {dominator} at t={t}")]
    DominatorUnderestimate { total: f64, dominator: f64, t: f64 },

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
