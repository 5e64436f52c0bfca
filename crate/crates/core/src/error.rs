use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid dialogue {dialogue_id}: {message}")]
    Validation {
        dialogue_id: String,
        message: String,
    },

    #[error("invalid split: {0}")]
    Spec(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("duplicate key: {0}")]
    DuplicateKey(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("missing embedding record: {0}")]
    MissingRecord(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sequence must contain at least one element")]
    EmptySequence,

    #[error("index out of range: {0}")]
    Index(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("numeric check failed: {0}")]
    Verification(String),

    #[error("cannot evaluate an empty prediction set")]
    EmptyEval,

    #[error("need at least 2 runs to aggregate, got {0}")]
    InsufficientRuns(usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("degenerate groups: {0}")]
    DegenerateGroup(String),

    #[error("contingency table has an all-zero {0}")]
    ZeroMargin(String),

    #[error("curve has no K=0 baseline")]
    MissingBaseline,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Divergence(_) | Error::Verification(_) => ErrorClass::Numeric,
            Error::Config(_) | Error::Spec(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}
