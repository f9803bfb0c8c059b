use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value while evaluating observation {index}")]
    NonFiniteObservation { index: usize },

    #[error("non-finite update for particle {particle} (step size {step_size}, bandwidth {bandwidth})")]
    NonFiniteUpdate {
        particle: usize,
        step_size: f64,
        bandwidth: f64,
    },

    #[error("covariance for arm {arm} is not positive definite")]
    NotPositiveDefinite { arm: usize },

    #[error("dataset exhausted after {served} rows; use a horizon of at most {served}")]
    EndOfData { served: usize },

    #[error("dataset error in {path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("cell agent={agent} realization={realization} failed: {source}")]
    Cell {
        agent: String,
        realization: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidArgument(_) | Error::Dataset { .. }
        )
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}
