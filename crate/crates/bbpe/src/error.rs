//! Crate-wide error type and exit-code mapping.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by any stage of the toolkit.
#[derive(Debug, Error)]
pub enum BbpeError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("manifest {path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("failed to ingest {path}: {message}")]
    Ingest { path: PathBuf, message: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("slicing error: {0}")]
    Slice(String),

    #[error("tokenizer document error: {0}")]
    Format(String),

    #[error("codec error: {0}")]
    Codec(String),

    #[error("oracle guard: {0}")]
    OracleGuard(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl BbpeError {
    /// Process exit code for the CLI: 1 usage, 2 input/ingest, 3 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            BbpeError::Usage(_) | BbpeError::InvalidConfig(_) => 1,
            BbpeError::Verification(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, BbpeError>;
