use std::path::PathBuf;

use crate::system::Violation;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("constraint ({code}) violated: {0}", code = .0.constraint())]
    Constraint(Violation),

    #[error("preprocessing error: {0}")]
    Preprocess(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("undefined ratio: reference energy efficiency is zero")]
    UndefinedRatio,

    #[error("{path}: parse error at line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: unsupported {what} (found {found}, expected {expected})")]
    Version {
        path: PathBuf,
        what: &'static str,
        found: String,
        expected: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
