use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite loss in batch {batch}")]
    NonFiniteLoss { batch: usize },

    #[error("training diverged at epoch {epoch}, step {step} (loss = {loss})")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    /// The objective or its gradient became non-finite; `history` holds every
    /// objective value accepted so far.
    #[error("solver diverged at iteration {iteration}")]
    SolverDiverged { iteration: usize, history: Vec<f64> },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
