use thiserror::Error;

use crate::solver::ExtinctionResult;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A type was queried that does not belong to the typeset.
    #[error("type {0} is not a member of the typeset")]
    UnknownType(String),

    /// An input violated a documented precondition.
    #[error("invalid input: {0}")]
    Validation(String),

    /// Functional iteration did not reach the residual tolerance.
    #[error("fixed-point iteration did not converge after {iterations} iterations (last change {last_change:.3e})")]
    NonConvergence { iterations: usize, last_change: f64, partial: Box<ExtinctionResult> },

    /// Successive truncations did not agree within the configured tolerance.
    #[error("truncated solutions did not stabilise (last delta {last_delta:.3e})")]
    NotStabilized { last_delta: f64, partial: Box<ExtinctionResult> },

    /// A combinatorial enumeration was refused because of its size.
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    /// The family graph contains a cycle of length greater than one.
    #[error("implication graph contains a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    /// Parsing of a process, family or configuration file failed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used in JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownType(_) => "unknown_type",
            Error::Validation(_) => "validation",
            Error::NonConvergence { .. } => "non_convergence",
            Error::NotStabilized { .. } => "not_stabilized",
            Error::SizeGuard(_) => "size_guard",
            Error::Cycle(_) => "cycle",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
