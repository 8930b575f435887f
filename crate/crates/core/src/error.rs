use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library. Numerical trouble inside a sweep is never
/// reported through this type; samplers work in log space instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("empty block: the marginal likelihood needs at least one observation")]
    EmptyBlock,

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("sampler `{sampler}` is incompatible with prior `{prior}`: {reason}")]
    Incompatible {
        sampler: String,
        prior: String,
        reason: String,
    },

    #[error("{what} too large: {got} exceeds the limit of {limit}")]
    TooLarge {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    /// Short stable identifier, used by the CLI for machine-parsable errors.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::InvalidData(_) => "invalid-data",
            Error::EmptyBlock => "empty-block",
            Error::InvalidAllocation(_) => "invalid-allocation",
            Error::Incompatible { .. } => "incompatible",
            Error::TooLarge { .. } => "too-large",
            Error::Undefined(_) => "undefined",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
