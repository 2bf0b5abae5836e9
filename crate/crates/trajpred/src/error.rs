//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{column}` in header")]
    MissingColumn { column: String },

    /// Parse failure, non-finite number, or value outside its domain.
    /// `row` is the 1-based data row (header excluded).
    #[error("invalid value in row {row}, column `{column}`: {detail}")]
    NonFiniteValue {
        row: usize,
        column: String,
        detail: String,
    },

    #[error("timestamp in row {row} does not increase over the previous row")]
    NonMonotoneTimestamp { row: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("cannot fit normalizer: series has no spread")]
    DegenerateRange,

    #[error("infeasible scenario spec: {0}")]
    InfeasibleSpec(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty input")]
    EmptyInput,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    DivergenceDetected { epoch: usize },

    #[error("network has exogenous channels but no exogenous inputs were supplied for {steps} steps")]
    MissingExogenous { steps: usize },

    #[error("invalid kinematic state: {0}")]
    InvalidState(String),

    #[error("corpus of {n} scenarios is too small (need at least {min})")]
    CorpusTooSmall { n: usize, min: usize },

    #[error("history of {have} samples is too short (need at least {need})")]
    InsufficientHistory { have: usize, need: usize },

    #[error("no scenario is long enough for a single evaluation window")]
    NoValidWindows,

    #[error("model file is not usable: {0}")]
    BadModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
