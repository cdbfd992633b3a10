//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration violated one of its invariants. The message names
    /// the violated invariant.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Malformed or unknown entry in a config file.
    #[error("config file {path}:{line}: {msg}")]
    ConfigParse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Two sequences that must agree in length do not.
    #[error("length mismatch in {context}: expected {expected}, got {actual}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A decoder metric column collapsed to zero and no posterior can be
    /// formed.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    /// Nonpositive value where a positive one is required.
    #[error("nonpositive input: {0}")]
    NonpositiveInput(&'static str),

    /// Ill-formed run request (empty sweep, zero frame budget, ...);
    /// command line callers map this to exit code 2.
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
