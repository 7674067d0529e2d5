//! Crate-wide error type.
//!
//! Every error carries a stable machine-readable kind, which the CLI prints
//! as an `error[<kind>]:` prefix on the diagnostic stream.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension mismatch between an operand and what the operation expects.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    /// A runtime parameter is outside its valid range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed input text.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Well-formed input carrying out-of-range or non-finite values.
    #[error("validation failed: {0}")]
    Validation(String),

    /// A zero-height box was given to an operation that cannot accept one.
    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    /// Evaluation was requested against a ground-truth store with no labels.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(
        context: impl Into<String>,
        expected: impl Into<String>,
        actual: impl Into<String>,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable error-kind tag used by the CLI diagnostic format.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::DegenerateBox(_) => "degenerate",
            Error::EmptyDataset(_) => "empty-dataset",
            Error::Io { .. } => "io",
        }
    }
}
