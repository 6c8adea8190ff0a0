use thiserror::Error;

use crate::basis::MultiIndex;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} would need {required:e}, above the cap of {cap}; {hint}")]
    ResourceCap {
        what: &'static str,
        required: f64,
        cap: usize,
        hint: String,
    },

    #[error("singular value {value:e} at index {index} is below the floor {floor:e}")]
    IllPosed {
        index: MultiIndex,
        value: f64,
        floor: f64,
    },

    #[error("index {0} is outside the operator's support")]
    UnsupportedIndex(MultiIndex),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("replication {replication} failed: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
