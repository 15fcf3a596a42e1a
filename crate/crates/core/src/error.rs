//! The crate-wide error type.
//!
//! Dimension mismatches, malformed input files, divergent training runs, and
//! corrupt model files are all hard errors here — nothing is silently padded,
//! truncated, or defaulted. Messages carry enough context (shapes, line
//! numbers, identifiers) to act on without re-running under a debugger.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    /// Two matrices had incompatible shapes for the attempted operation.
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// Two vectors (or a matrix dimension and a vector) disagreed in length.
    #[error("length mismatch in {op}: {left} vs {right}")]
    LengthMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    /// A constructor was handed dimensions that cannot describe a value.
    #[error("invalid dimensions in {op}: {detail}")]
    InvalidDimensions { op: &'static str, detail: String },

    /// A data file failed to parse; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The same (user, item) pair was rated twice.
    #[error("duplicate rating for user `{user}` on item `{item}` at line {line} (first seen at line {first_line})")]
    DuplicateRating {
        user: String,
        item: String,
        line: usize,
        first_line: usize,
    },

    /// An input that must be non-empty was empty.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// An item appears in the ratings but has no feature row.
    #[error("item `{item}` appears in the ratings but not in the features file")]
    MissingItem { item: String },

    /// A feature row names an item the ratings never mention.
    #[error("unknown item `{item}` at line {line}: not present in the ratings")]
    UnknownItem { item: String, line: usize },

    /// A user id was requested that the dataset does not contain.
    #[error("unknown user `{0}`")]
    UnknownUser(String),

    /// A user exists but has no usable training examples.
    #[error("user `{0}` has no rated items to learn from")]
    ColdUser(String),

    /// A configuration value violated its documented range or combination.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Training produced a non-finite cost and was aborted.
    #[error("training diverged: cost became non-finite at {unit} {index}")]
    Diverged { unit: &'static str, index: usize },

    /// An analytic gradient failed verification against central differences.
    #[error("gradient check failed: relative error {epsilon:e} exceeds tolerance {tolerance:e}")]
    GradCheckFailed { epsilon: f64, tolerance: f64 },

    /// A model file declared a format version this build does not read.
    #[error("model file version mismatch: found `{found}`, expected `{expected}`")]
    ModelVersion { found: String, expected: String },

    /// A model file was syntactically unreadable; `line` is 1-based.
    #[error("corrupt model file at line {line}: {message}")]
    ModelCorrupt { line: usize, message: String },

    /// A model file parsed but its pieces do not fit together.
    #[error("model file shape inconsistency: {0}")]
    ModelShape(String),

    /// An underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
