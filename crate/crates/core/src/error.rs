use alloc::string::String;

/// Errors raised by the inference, compensation and oracle routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("combined precision is singular")]
    SingularPrecision,

    #[error("indefinite ratio precision in dimension {dim}: {detail}")]
    IndefiniteRatio { dim: usize, detail: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scorer is incompatible with this decoder: {0}")]
    IncompatibleScorer(&'static str),

    #[error("frame evidence lacks {0}")]
    MissingEvidence(&'static str),

    #[error("observation outside the invertible region in dimension {dim}")]
    InvalidObservation { dim: usize },

    #[error("product state space of {states} states exceeds the limit of {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },

    #[error("enumeration over {paths} paths exceeds the limit of {limit}")]
    InstanceTooLarge { paths: u128, limit: u128 },

    #[error("quadrature bounds do not cover the integrand mass (boundary fraction {fraction:e})")]
    QuadratureBounds { fraction: f64 },

    #[error("unsupported structure: {0}")]
    Unsupported(String),

    #[error("numeric failure: {0}")]
    Numeric(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
