//! Command-line error type and its exit-code mapping.
//!
//! Every failure is sorted into one of three buckets with a stable exit
//! code, so scripts can branch on *why* a run stopped: 2 for configuration
//! rejected before any work started, 3 for unreadable or unusable inputs,
//! and 4 for numeric divergence during training. Solver-bench violations are
//! not errors — the command reports them in its summary and exits 1.

use thiserror::Error;

/// Exit code for configuration failures (including unparseable config and
/// grid files). The message names the offending field where one is known.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for data failures: missing or malformed inputs, unreadable run
/// artifacts, and I/O problems while writing outputs.
pub const EXIT_DATA: i32 = 3;
/// Exit code for runs aborted on a non-finite loss.
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{0}")]
    Divergence(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Divergence(_) => EXIT_DIVERGENCE,
        }
    }

    /// Shorthand for a config rejection that names a field path.
    pub fn config_field(path: &str, message: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{path}: {message}"))
    }
}

impl From<pmoe_core::error::Error> for CliError {
    fn from(err: pmoe_core::error::Error) -> Self {
        use pmoe_core::error::Error;
        match &err {
            // Core prefixes these with "invalid config:" already; strip the
            // duplication by keeping only the field path and message.
            Error::Config { path, message } => CliError::Config(format!("{path}: {message}")),
            Error::Divergence { .. } => CliError::Divergence(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}
