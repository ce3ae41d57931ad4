use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CassError>;

#[derive(Debug, Error)]
pub enum CassError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("cannot read audio file {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },

    #[error("sample rate mismatch in {path}: expected {expected} Hz, found {found} Hz")]
    RateMismatch {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("no usable segments: {0}")]
    NoUsableSegments(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("non-finite {what} at epoch {epoch}, batch {batch}, component {component}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        batch: usize,
        component: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("plot rendering failed: {0}")]
    Plot(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CassError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        CassError::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CassError::Config(msg.into())
    }

    pub(crate) fn shape(expected: impl Into<String>, found: impl Into<String>) -> Self {
        CassError::Shape {
            expected: expected.into(),
            found: found.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CassError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        CassError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
