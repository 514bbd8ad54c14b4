//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any part of the separation toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration (bad STFT parameters, malformed experiment
    /// config, unknown keys, out-of-range hyperparameters).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Shapes of two arrays that must agree do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A computation produced non-finite values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// SNR-relative scaling requested against a silent signal.
    #[error("undefined SNR: {0}")]
    UndefinedSnr(String),

    /// Input that the algorithm cannot meaningfully process (e.g. an
    /// all-zero matrix handed to a factorization).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A serialized container failed to parse: wrong magic, bad checksum,
    /// truncated payload, or an inconsistent header.
    #[error("model file error: {0}")]
    Format(String),

    /// A referenced file or directory does not exist or cannot be read.
    #[error("missing input: {0}")]
    MissingInput(String),

    /// Files that evaluation needs but could not find, listed exhaustively.
    #[error("missing estimate files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingEstimates(Vec<PathBuf>),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that indicate a bad invocation rather than a
    /// failure while doing the work. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::MissingInput(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
