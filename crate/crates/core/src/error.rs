//! Crate-wide error type.
//!
//! Every failure mode is a variant so callers (notably the CLI) can map errors
//! onto process exit codes without string matching: configuration and format
//! problems are user-fixable, `Numerical` means a run aborted mid-flight.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape mismatch between operands; the message names both shapes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An API precondition was violated (non-scalar loss, NaN multiplier,
    /// empty prompt parts, rank 0, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid or inconsistent configuration (bad field values, adapter/layer
    /// mismatches, encoder fingerprint mismatches).
    #[error("configuration error: {0}")]
    Config(String),

    /// The positive and negative prompts collapse to the same embedding, so
    /// no concept direction exists.
    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    /// A numeric run aborted (NaN loss); the message names the epoch.
    #[error("numerical abort: {0}")]
    Numerical(String),

    /// A container or fixture file is malformed (bad magic, truncation,
    /// inconsistent offsets, unparseable vocab line).
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
