//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Caller-supplied value violates an operation's contract.
    #[error("invalid input: {0}")]
    Input(String),

    /// Run configuration fails validation.
    #[error("invalid config: {0}")]
    Config(String),

    /// A data file is malformed (bad magic, truncated, count mismatch).
    #[error("bad data file {path}: {reason}")]
    DataFormat { path: PathBuf, reason: String },

    /// A checkpoint or CSV file is malformed.
    #[error("bad file {path}: {reason}")]
    FileFormat { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
