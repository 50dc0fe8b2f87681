use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error("integration diverged at step {step} (state {state:?})")]
    Integration { step: usize, state: Vec<f64> },

    #[error("burst at z = {z:?}: {source}")]
    Burst {
        z: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    Training { epoch: usize, batch: usize },

    #[error("jump estimation failed: {0}")]
    Estimation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed data in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Attaches the initial condition of the burst that produced this error.
    pub fn at_z(self, z: &[f64]) -> Self {
        Error::Burst {
            z: z.to_vec(),
            source: Box::new(self),
        }
    }

    /// True when the error (or the error it wraps) comes from arithmetic
    /// rather than from bad input or missing files.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Integration { .. }
            | Error::Training { .. }
            | Error::Estimation(_)
            | Error::Domain(_) => true,
            Error::Burst { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
