use thiserror::Error;

use crate::search_space::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid encoding: {0}")]
    InvalidEncoding(Violation),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unknown architecture {enc} on task `{task}`")]
    UnknownArchitecture { enc: String, task: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("space too large to enumerate: {0} architectures")]
    SpaceTooLarge(usize),
    #[error("model is not trained")]
    Untrained,
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
