use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the pipeline and the command line.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("{0}")]
    Dataset(String),

    #[error("config {file}: at `{key}`: {message}")]
    Config {
        file: PathBuf,
        key: String,
        message: String,
    },

    #[error(transparent)]
    Core(#[from] scsc_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PipelineError {
    pub fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        PipelineError::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 1 usage, 2 data, 3 numerical or convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) | PipelineError::Config { .. } => 1,
            PipelineError::Core(e) if e.is_numerical() => 3,
            PipelineError::Core(scsc_core::Error::InvalidInput(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
