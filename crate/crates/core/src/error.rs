use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("simulation diverged at t={time:.4}s: {snapshot}")]
    Diverged { time: f64, snapshot: String },
    #[error("checkpoint {path}: corrupted ({reason})")]
    Corrupt { path: PathBuf, reason: String },
    #[error("checkpoint {path}: format version {found} is not supported (expected {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error("checkpoint holds a `{found}` model but a `{expected}` model was requested")]
    Incompatible { expected: String, found: String },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Tensor(#[from] ptensor::TensorError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Corrupt { .. } | Error::Version { .. } => 3,
            Error::Diverged { .. } | Error::NonFinite(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
