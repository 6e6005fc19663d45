//! Crate-wide error type.
//!
//! Errors are split by the stage that produced them so callers (and the CLI)
//! can tell a bad input apart from a numerical breakdown mid-run.

use thiserror::Error;

/// Anything that can go wrong across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A value or combination of values fails a precondition (bad grid,
    /// out-of-range index, mismatched dimensions, ...).
    #[error("validation: {0}")]
    Validation(String),

    /// A configuration is self-consistent but asks for something the code
    /// cannot do (missing partial derivatives with finite differences
    /// disabled, unsupported mollification target, ...).
    #[error("configuration: {0}")]
    Configuration(String),

    /// Numerical failure while simulating the forward system. `node` is the
    /// reversed-clock node index at which the failure occurred.
    #[error("simulation at node {node}: {message}")]
    Simulation { node: usize, message: String },

    /// Numerical failure during backward induction. `step` is the
    /// reversed-clock step index.
    #[error("solver at step {step}: {message}")]
    Solver { step: usize, message: String },

    /// A plain-text experiment file failed to parse. `line` is 1-based.
    #[error("config parse {path}:{line}: {message}")]
    ConfigParse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for a validation failure.
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Shorthand for a configuration failure.
    pub fn configuration(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }
}
