use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimation, simulation and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Pose and landmark (nearly) coincide, the observation model is undefined.
    #[error("degenerate geometry: range {range:.3e} m below threshold")]
    DegenerateGeometry { range: f64 },

    /// A numerical routine failed to produce a usable result.
    #[error("numerical failure in {context}: {message}")]
    NumericalFailure {
        context: &'static str,
        message: String,
        /// Residual achieved by an iterative solver before giving up, if any.
        residual: Option<f64>,
    },

    /// A dataset row could not be parsed.
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A dataset parsed but violates a structural invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Filesystem failure, with the offending path attached.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(context: &'static str, message: impl Into<String>) -> Self {
        Error::NumericalFailure {
            context,
            message: message.into(),
            residual: None,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
