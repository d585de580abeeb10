use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("accuracy error: {0}")]
    Accuracy(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("stability error at t = {time_ps:.4} ps: {message} (try a smaller time step)")]
    Stability { time_ps: f64, message: String },

    #[error("divergence at t = {time_ps:.4} ps: non-finite wavefunction")]
    Divergence { time_ps: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("provenance error: {0}")]
    Provenance(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 for bad input, 3 for numerical failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Validation { .. } | Error::Geometry(_) | Error::Domain(_) | Error::Serde(_) => 2,
            Error::Accuracy(_)
            | Error::Solver(_)
            | Error::Stability { .. }
            | Error::Divergence { .. } => 3,
            _ => 1,
        }
    }
}
