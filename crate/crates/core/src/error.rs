use thiserror::Error;

/// Errors raised across the certificate engine and the optimizers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid function class: {0}")]
    InvalidFunctionClass(String),

    #[error("invalid method parameters: {0}")]
    InvalidMethod(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("component index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("supply rate requires {required}, got {actual}")]
    WrongAssumption { required: String, actual: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("symmetric eigenvalue routine did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    EigenNonConvergence { sweeps: usize, residual: f64 },

    #[error("rate formula undefined: {0}")]
    RateUndefined(String),

    #[error("certificate not verified: {0}")]
    NotCertified(String),

    #[error("missing recorded input: {0}")]
    MissingTraceData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
