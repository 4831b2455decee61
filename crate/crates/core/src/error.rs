//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by channel generation, the solvers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (dimension mismatch, nonpositive
    /// distance, invalid parameter value, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The combined channel seen by the precoder is exactly zero, so no
    /// beamforming direction exists.
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    /// A brute-force oracle was asked to enumerate an infeasibly large grid.
    #[error("search space too large: {0}")]
    TooLarge(String),

    /// The SDP solver failed to reach the requested duality gap.
    #[error("sdp solver failure: {0}")]
    SolverFailure(String),

    /// An experiment configuration is invalid; `path` names the offending
    /// key or file location.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
