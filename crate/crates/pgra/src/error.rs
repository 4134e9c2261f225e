//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed JSON line: {message}")]
    JsonLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate evidence id {id} (line {line})")]
    DuplicateId { id: u64, line: usize },

    #[error("unknown evidence id {id}")]
    UnknownEvidenceId { id: u64 },

    #[error("label {label:?} is not in the label set of task {task:?}")]
    UnknownLabel { label: String, task: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("text at position {index} is {len} bytes, exceeds maximum {max}")]
    TextTooLong { index: usize, len: usize, max: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("transport error contacting {endpoint} (batch {batch}): {message}")]
    Transport {
        endpoint: String,
        batch: usize,
        message: String,
    },

    #[error("protocol error from {endpoint} (batch {batch}): {message}")]
    Protocol {
        endpoint: String,
        batch: usize,
        message: String,
    },

    #[error("index file error at offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("evidence id {id} has no pseudo-label")]
    MissingPseudoLabel { id: u64 },

    #[error("no verbalizer for label {label:?}")]
    MissingVerbalizer { label: String },

    #[error("requested {m} exemplars but the pool holds {pool}")]
    ExemplarPoolTooSmall { m: usize, pool: usize },

    #[error("balanced sampling infeasible: {0}")]
    BalancedInfeasible(String),

    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch {
        context: String,
        left: usize,
        right: usize,
    },

    #[error("task file {path}: {message}")]
    TaskFile { path: PathBuf, message: String },

    #[error("missing data for query {query_id:?}: {what}")]
    MissingQueryData { query_id: String, what: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
