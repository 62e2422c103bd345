use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input value {value}")]
    NonFiniteInput { value: f64 },

    #[error("division by zero: divisor node {node} has value 0")]
    DivisionByZero { node: usize },

    #[error("negative power {exponent} of zero at node {node}")]
    NegativePowerOfZero { node: usize, exponent: i32 },

    #[error("variable belongs to tape {found}, expected tape {expected}")]
    ForeignVar { expected: u64, found: u64 },

    #[error("variable at node {index} was invalidated by a rollback")]
    StaleVar { index: usize },

    #[error("checkpoint mark is stale or belongs to another tape")]
    StaleMark,

    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("derivative order must be at least 1, got {0}")]
    ZeroOrder(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite gradient at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("operation requires a heat problem")]
    NotHeat,

    #[error("evaluation region outside the ground-truth domain: {0}")]
    OutOfDomain(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
