use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("step size {gamma} violates the precondition gamma <= {bound}")]
    StepTooLarge { gamma: f64, bound: f64 },

    #[error("enumeration needs {needed} outcomes, limit is {limit}")]
    EnumerationTooLarge { needed: usize, limit: usize },

    #[error("estimator draws continuous noise, exact enumeration is impossible")]
    ContinuousRandomness,

    #[error("reference solution is not available")]
    MissingReference,

    #[error("malformed problem file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
