use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid working model: {0}")]
    InvalidSpec(String),

    #[error("zero vector is not inside the convex hull of the constraint rows")]
    HullViolation,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("working model is not identified: moment Jacobian lost column rank")]
    RankDeficient,

    #[error("invalid scheme weights: {0}")]
    InvalidWeights(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("no secondary dataset carries information (all IIB values vanish)")]
    DegenerateIib,

    #[error("complete or quasi-complete separation detected (|beta| exceeded {limit})")]
    Separation { limit: f64 },

    #[error("non-positive variance for coefficient {index}")]
    NonPositiveVariance { index: usize },

    #[error("{failed} of {total} Monte Carlo replicates failed")]
    TooManyFailures { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
