use thiserror::Error;

use crate::hierarchy::HierarchyViolation;

/// Errors raised by state construction and the flock dynamics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlockError {
    #[error("a flock needs at least 2 birds, got {0}")]
    TooFewBirds(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("timestep h = {h} must satisfy 0 < h <= 1/(k-1) = {max}")]
    StepTooLarge { h: f64, max: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("frame mismatch: {0}")]
    FrameMismatch(&'static str),

    #[error(transparent)]
    Hierarchy(#[from] HierarchyViolation),

    /// A mathematical invariant of the dynamics failed. Always a bug.
    #[error("invariant breach: {0}")]
    InvariantBreach(String),
}

pub type Result<T, E = FlockError> = std::result::Result<T, E>;
