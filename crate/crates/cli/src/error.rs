use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{file}: row {row}, column {column:?}: {message}")]
    Parse {
        file: PathBuf,
        /// One-based data row, not counting the header.
        row: usize,
        column: String,
        message: String,
    },

    #[error("{file}: subject {id:?} has {rows} rows, expected {expected}")]
    UnbalancedLongitudinal {
        file: PathBuf,
        id: String,
        rows: usize,
        expected: usize,
    },

    #[error("{file}: subject {id:?} does not appear in the main file")]
    UnknownSubject { file: PathBuf, id: String },

    #[error(transparent)]
    Model(#[from] minbo::Error),
}

/// Machine-readable error printed on failure.
#[derive(Serialize)]
pub struct ErrorObject {
    pub error: &'static str,
    pub message: String,
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "Io",
            Self::Config(_) => "Config",
            Self::Parse { .. } => "ParseError",
            Self::UnbalancedLongitudinal { .. } => "UnbalancedLongitudinal",
            Self::UnknownSubject { .. } => "UnknownSubject",
            Self::Model(e) => model_kind(e),
        }
    }

    pub fn to_object(&self) -> ErrorObject {
        ErrorObject {
            error: self.kind(),
            message: self.to_string(),
        }
    }
}

fn model_kind(e: &minbo::Error) -> &'static str {
    use minbo::Error::*;
    match e {
        NotPositiveDefinite { .. } => "NotPositiveDefinite",
        OutOfRange(_) => "OutOfRange",
        DimensionMismatch(_) => "DimensionMismatch",
        InvalidData(_) => "InvalidData",
        InvalidSpec(_) => "InvalidSpec",
        HullViolation => "HullViolation",
        NotConverged { .. } => "NotConverged",
        RankDeficient => "RankDeficient",
        InvalidWeights(_) => "InvalidWeights",
        LengthMismatch { .. } => "LengthMismatch",
        DegenerateIib => "DegenerateIIB",
        Separation { .. } => "Separation",
        NonPositiveVariance { .. } => "NonPositiveVariance",
        TooManyFailures { .. } => "TooManyFailures",
    }
}
