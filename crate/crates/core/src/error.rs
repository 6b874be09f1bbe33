//! Error type shared across the crate.
//!
//! Variants are grouped by which stage of a run can produce them: shape and
//! domain violations from the numeric layer, configuration rejections, data
//! ingestion failures, and numeric divergence during training. The CLI maps
//! these groups onto distinct process exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands (or an operand and an expected shape) do not line up.
    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    DimensionMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    /// An input is outside the mathematical domain of an operation
    /// (empty vector to a softmax, negative weight on the simplex, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An API was driven through an illegal sequence of calls, such as
    /// running a backward pass twice over the same recorded forward pass.
    #[error("invalid state: {0}")]
    State(String),

    /// A configuration field failed validation. `path` names the offending
    /// field so the caller can point the user at the exact line to fix.
    #[error("invalid config: {path}: {message}")]
    Config { path: String, message: String },

    /// A required column is absent from an input table header.
    #[error("missing column {0:?} in input header")]
    MissingColumn(String),

    /// A data row could not be used. `line` is the 1-based line number in
    /// the source file, counting the header.
    #[error("bad row at line {line}: {message}")]
    Row { line: usize, message: String },

    /// Training produced a non-finite loss; the run cannot continue.
    #[error("non-finite loss at training step {step}; aborting run")]
    Divergence { step: usize },

    /// A checkpoint file is malformed or inconsistent with its config.
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for a config-field rejection.
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
