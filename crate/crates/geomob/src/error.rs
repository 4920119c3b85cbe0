//! Error type shared by all pipeline stages.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input value outside its legal numeric range (coordinates, overflowing
    /// axial indices, out-of-bbox query points).
    #[error("range error: {0}")]
    Range(String),

    /// Configuration inconsistent with the data it is applied to.
    #[error("config error: {0}")]
    Config(String),

    /// Structural precondition violated (empty inputs, shape mismatches).
    #[error("validation error: {0}")]
    Validation(String),

    /// Malformed text input; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Malformed binary input; `offset` is the byte position of the fault.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// Numerical failure (divergence, non-finite values, indefinite systems).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
