use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Sim(#[from] swarmlog_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_owned(), source }
    }

    pub fn format(path: &Path, message: impl ToString) -> Self {
        HarnessError::Format { path: path.to_owned(), message: message.to_string() }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
