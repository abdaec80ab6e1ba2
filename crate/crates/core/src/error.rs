use std::io;

use thiserror::Error;

/// Errors produced by the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("training failed at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },
    #[error("time budget of {budget_seconds}s exceeded")]
    Timeout { budget_seconds: f64 },
    #[error("detector failed on subspace {mask}: {source}")]
    Subspace {
        mask: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(message: impl Into<String>) -> Result<T> {
    Err(Error::Input(message.into()))
}
