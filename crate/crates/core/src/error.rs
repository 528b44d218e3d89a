use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} is not {property}")]
    NotDefinite {
        what: &'static str,
        property: &'static str,
    },

    #[error("singular {what} (condition estimate {condition:.3e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Data {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("numerical failure at step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes and C error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn at_step(self, step: usize) -> Self {
        match self {
            e @ (Error::Step { .. } | Error::Config(_) | Error::Data { .. }) => e,
            other => Error::Step {
                step,
                source: Box::new(other),
            },
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Json(_) => ErrorKind::Config,
            Error::Data { .. } | Error::Io(_) => ErrorKind::Data,
            Error::Step { source, .. } => source.kind(),
            Error::Dimension { .. }
            | Error::NotDefinite { .. }
            | Error::Singular { .. }
            | Error::NonFinite(_) => ErrorKind::Numerical,
        }
    }
}
