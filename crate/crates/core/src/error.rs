//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edf: {0}")]
    Edf(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty set: {0}")]
    Empty(String),

    #[error("audit failure at checkpoint {checkpoint}: {witness}")]
    Audit { checkpoint: usize, witness: String },
}

impl Error {
    /// Machine-parsable error category, used by the CLI for one-line errors
    /// and exit codes (0 ok, 2 config, 3 audit, 4 io).
    pub fn category(&self) -> &'static str {
        match self {
            Error::Edf(_) => "edf",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Shape(_) => "shape",
            Error::Invalid(_) => "invalid",
            Error::Numerical(_) => "numerical",
            Error::Empty(_) => "empty",
            Error::Audit { .. } => "audit",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Audit { .. } => 3,
            Error::Io(_) | Error::Edf(_) => 4,
            _ => 1,
        }
    }
}
