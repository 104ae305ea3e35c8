//! Error types shared across the crate.
//!
//! Two broad classes matter to callers: bad input (rejected arguments,
//! malformed configuration) and internal invariant violations. The CLI
//! maps input and configuration errors to exit code 2 and keeps exit
//! code 1 for validation-suite failures.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration file is malformed; the message names the field.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Residual construction found zero leftover mass, which happens
    /// only when the verifier and proposer distributions coincide.
    #[error("degenerate residual: verifier and proposal distributions are identical")]
    DegenerateResidual,

    /// An internal invariant failed; indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Process exit code for an error that reaches the command line:
    /// everything here is a usage, configuration, or environment
    /// problem (validation-suite failures exit 1 and never surface as
    /// this type).
    pub fn exit_code(&self) -> i32 {
        2
    }
}
