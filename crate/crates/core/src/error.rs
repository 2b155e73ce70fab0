use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the discretization, the linear solvers and the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("matrix is not positive definite (non-positive pivot at index {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("subdomain {subdomain}: {source}")]
    Subdomain {
        subdomain: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("reduced solve failed with {active} active nodes: {source}")]
    ReducedSolve {
        active: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
