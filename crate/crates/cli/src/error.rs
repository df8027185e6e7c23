use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// `line` is 1-based.
    #[error("{}:{line}: {message}", path.display())]
    Config { path: PathBuf, line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Core(#[from] resalign::Error),

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// An embedded check failed; the artifacts were still written.
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CliError::InvalidInput(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::File {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for failed checks, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 2,
            _ => 1,
        }
    }
}
