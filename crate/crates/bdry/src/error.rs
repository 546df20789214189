//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by model evaluation, file formats, search, and metrics.
#[derive(Debug, Error)]
pub enum Error {
    /// An input tensor does not match the shape a network or operation expects.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// A model or tensor file is malformed. `offset` is the byte position of
    /// the first inconsistency.
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    /// A point sits exactly on an activation facet (some ReLU pre-activation
    /// is zero), so its linear region is ambiguous.
    #[error("input lies on an activation boundary (pre-activation exactly zero)")]
    BoundaryPoint,

    /// A boundary-dependent quantity was requested from a failed search, or
    /// no decision boundary exists in the searched domain.
    #[error("no decision boundary available: {0}")]
    NoBoundary(String),

    /// Bisection refinement was asked to refine between two points with the
    /// same predicted label.
    #[error("refinement endpoints have the same predicted label")]
    SameLabel,

    /// A metric's denominator is zero (or variance vanishes) so the score is
    /// undefined for this input.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// The exact geometry oracle only supports very low input dimensions.
    #[error("oracle limited to inputs of dimension <= {max}, got {got}")]
    Scale { max: usize, got: usize },

    /// Training diverged or was misconfigured.
    #[error("training failed: {0}")]
    Training(String),

    /// A configuration file or flag set is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A documented precondition was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
