//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or shape mismatch between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Malformed input record or file.
    #[error("format error: {0}")]
    Format(String),

    /// A record references an id that is not in the store.
    #[error("unknown reference: {0}")]
    Reference(String),

    /// A label is outside the expected class range.
    #[error("bad label: {0}")]
    Label(String),

    /// A case cites no law articles and no fallback is available.
    #[error("case {case_id} has no usable instruments")]
    MissingIv { case_id: String },

    /// Non-finite value or numeric divergence.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid argument to a library call.
    #[error("input error: {0}")]
    Input(String),

    /// Operation invoked in a state that does not permit it.
    #[error("state error: {0}")]
    State(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
