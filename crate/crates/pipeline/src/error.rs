use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad config, arguments or parameters.
    #[error("{0}")]
    Validation(String),

    /// Divergence, non-finite losses or a failed fit.
    #[error("{0}")]
    Numerical(String),

    /// A required upstream artifact is absent or stale.
    #[error("{0}")]
    MissingInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Other(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Numerical(_) => 3,
            PipelineError::MissingInput(_) => 4,
            PipelineError::Io { .. } | PipelineError::Other(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            let path = path.into();
            return PipelineError::MissingInput(format!("{} not found", path.display()));
        }
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<levykm::Error> for PipelineError {
    fn from(e: levykm::Error) -> Self {
        use levykm::Error as E;
        match e {
            ref e if e.is_numerical() => PipelineError::Numerical(e.to_string()),
            E::Parameter(_) | E::Expression { .. } | E::Burst { .. } => {
                PipelineError::Validation(e.to_string())
            }
            E::Io { path, source } => PipelineError::io(path, source),
            E::Format { .. } => PipelineError::MissingInput(e.to_string()),
            other => PipelineError::Other(other.to_string()),
        }
    }
}

impl From<csv::Error> for PipelineError {
    fn from(e: csv::Error) -> Self {
        PipelineError::MissingInput(format!("unreadable table: {e}"))
    }
}
