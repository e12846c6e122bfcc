use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failure while reading or parsing input data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },
}

impl DataError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, offset: usize, message: impl Into<String>) -> Self {
        DataError::Parse {
            path: path.to_path_buf(),
            offset,
            message: message.into(),
        }
    }
}

/// Top-level error of the command line and the benchmark drivers.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl AppError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Data(_) => 3,
            AppError::Numerical(_) => 4,
            AppError::Io(_) => 5,
        }
    }
}

impl From<dhgf_core::Error> for AppError {
    fn from(e: dhgf_core::Error) -> Self {
        match e {
            dhgf_core::Error::Numerical(m) => AppError::Numerical(m),
            other => AppError::Config(other.to_string()),
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
