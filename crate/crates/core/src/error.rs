use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },

    #[error("line {line}: statement is empty")]
    EmptyStatement { line: usize },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("cannot split {0} items into three non-empty parts")]
    SplitTooSmall(usize),

    #[error("invalid split fractions: train {train}, val {val}")]
    InvalidFractions { train: f64, val: f64 },

    #[error("line {line}: expected {expected} vector components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: non-finite vector component")]
    NonFinite { line: usize },

    #[error("{0}: training data contains a single class")]
    SingleClass(&'static str),

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("length mismatch: {left} features vs {right} targets")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("accuracy must be positive, got {0}")]
    NonPositiveAccuracy(f64),

    #[error("{0} model is not trained")]
    Untrained(&'static str),

    #[error("bundle file is empty")]
    EmptyBundle,

    #[error("bundle file is truncated")]
    TruncatedBundle,

    #[error("bundle format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
