use thiserror::Error;

/// Errors raised by the detection toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("bandwidth {bandwidth} out of range (valid: 1..={max})")]
    BandwidthOutOfRange { bandwidth: usize, max: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("signal violates the ellipsoid constraint (weighted norm {weighted} > 1)")]
    OutsideEllipsoid { weighted: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("no amplitude >= {min_amplitude} yields a valid correlation matrix obeying the decay bound")]
    CorrelationRepairFailed { min_amplitude: f64 },

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("bisection does not bracket the target level: {0}")]
    NotBracketing(String),

    #[error("Monte Carlo divergence estimate refused: {0}")]
    EstimatorLimit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
