use std::path::PathBuf;

use thiserror::Error;

/// Failure classes, each mapped to a distinct process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{} validation error(s)", .0.len())]
    Validation(Vec<String>),

    #[error("{0}")]
    EquivalenceFailed(String),

    #[error("{0}")]
    NotConverged(String),

    #[error("{0}")]
    Guard(String),

    #[error(transparent)]
    Core(#[from] softmdp_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Write { .. } | CliError::Parse { .. } => 1,
            CliError::Validation(_) => 2,
            CliError::EquivalenceFailed(_) => 3,
            CliError::NotConverged(_) => 4,
            CliError::Guard(_) | CliError::Core(_) => 5,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
