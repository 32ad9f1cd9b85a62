use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum ClampError {
    /// Input violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("no principal axis: covariance matrix is zero")]
    NoPrincipalAxis,

    /// Backward was called with a tape that does not belong to the current parameters.
    #[error("stale tape: {0}")]
    StaleTape(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ClampError>;

impl ClampError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        ClampError::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ClampError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        ClampError::Format { path: path.into(), reason: reason.into() }
    }

    /// True for errors caused by the filesystem rather than by bad input.
    pub fn is_io(&self) -> bool {
        matches!(self, ClampError::Io { .. })
    }
}
