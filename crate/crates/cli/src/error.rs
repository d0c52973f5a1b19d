use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: format error at byte {offset}: {msg}")]
    FileFormat { path: String, offset: usize, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Solver(#[from] qcrf::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            CliError::Format { offset, msg } => {
                CliError::FileFormat { path: path.display().to_string(), offset, msg }
            }
            other => other,
        }
    }

    /// Process exit code: 2 for broken internal invariants, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(qcrf::Error::NonSubmodular { .. }) | CliError::Invariant(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
