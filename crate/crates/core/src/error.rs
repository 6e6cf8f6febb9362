//! Error taxonomy shared by every module.
//!
//! Three failure classes matter operationally: bad run configuration
//! (rejected before any computation), arguments outside an operation's
//! domain (including divergent integral requests), and numerical
//! breakdown during a run (NaN, overflow, failed step-size control).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration, rejected before any computation starts.
    #[error("configuration error: {0}")]
    Config(String),

    /// Argument outside an operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Numerical breakdown during a run (NaN, overflow, step-size collapse).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
