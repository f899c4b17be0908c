use thiserror::Error;

pub type Result<T, E = DdlError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DdlError {
    #[error("input contains NaN or infinite entries")]
    NonFinite,

    #[error("singular value decomposition did not converge")]
    ConvergenceFailure,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver did not reach tolerance within {iterations} iterations")]
    MaxIterExceeded { iterations: usize },

    #[error("cross-validation fold {fold} is empty")]
    DegenerateFolds { fold: usize },

    #[error("degenerate denominator Z_j'P^2X_j = {value:e}")]
    DegenerateDenominator { value: f64 },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("linear system is singular")]
    SingularSystem,

    #[error("probability {0} outside (0, 1)")]
    OutOfRange(f64),
}

impl DdlError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DdlError::InvalidParameter(msg.into())
    }
}
