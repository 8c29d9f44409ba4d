use thiserror::Error;

use crate::selection::TraceEntry;
use crate::sysid::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}, column '{column}': {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("model file error: {0}")]
    Format(String),

    #[error("integration diverged at t = {t} in state {state}")]
    Divergence {
        t: f64,
        state: usize,
        /// Trajectory up to the last finite step.
        partial: Box<Trajectory>,
    },

    #[error("selection aborted at substage {substage}: {source}")]
    Selection {
        substage: usize,
        source: Box<Error>,
        trace: Vec<TraceEntry>,
    },

    #[error("state {state}: {source}")]
    State { state: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 usage/config, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Capability(_) => 2,
            Error::Domain(_)
            | Error::Data(_)
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::Io(_) => 3,
            Error::Numerical(_) | Error::Divergence { .. } => 4,
            Error::Selection { source, .. } | Error::State { source, .. } => source.exit_code(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
