//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("p must lie in [1, 2], got {0}")]
    InvalidP(f64),
    #[error("epsilon must be strictly positive, got {0}")]
    NonPositiveEps(f64),
    #[error("residual vector is empty")]
    EmptyResidual,
    #[error("map does not provide an analytic jacobian")]
    JacobianUnavailable,
    #[error("non-finite value while evaluating {0}")]
    NonFiniteEvaluation(&'static str),
    #[error("normal equations remained singular after damping escalation to {lambda:.3e}")]
    SingularNormalEquations { lambda: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("trace too short: need at least {need} states, got {got}")]
    TraceTooShort { need: usize, got: usize },
    #[error("sample point coincides with the reference point")]
    DegenerateSample,
    #[error("probe points coincide")]
    DegeneratePair,
    #[error("alpha must be strictly positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("c_hat must be strictly positive, got {0}")]
    NonPositiveCHat(f64),
    #[error("support index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("all {0} multistart branches failed")]
    AllStartsFailed(usize),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for input problems, 1 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Io(_) | Error::InvalidConfig(_) => 2,
            _ => 1,
        }
    }
}
