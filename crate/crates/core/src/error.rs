//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by model evaluation, solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum ParaError {
    /// An input lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// An allocation has no resources on a link or level that carries work.
    #[error("degenerate allocation: {0}")]
    Degenerate(String),

    /// Matrix or vector shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical routine produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// The constraint set is empty.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative method stopped at its iteration cap.
    #[error("no convergence after {iterations} iterations: {detail}")]
    Convergence { iterations: usize, detail: String },

    /// A configuration value failed validation.
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A configuration file could not be parsed.
    #[error("config parse error: {0}")]
    Parse(String),

    /// A sub-solver failed inside an outer loop.
    #[error("outer iteration {iteration}: {source}")]
    Outer {
        iteration: usize,
        #[source]
        source: Box<ParaError>,
    },

    /// File system or CSV failure.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ParaError {
    fn from(e: std::io::Error) -> Self {
        ParaError::Io(e.to_string())
    }
}

impl From<csv::Error> for ParaError {
    fn from(e: csv::Error) -> Self {
        ParaError::Io(e.to_string())
    }
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, ParaError>;
