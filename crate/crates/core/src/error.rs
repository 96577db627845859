//! Error types shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file. `row` is 1-based and counts the header as row 1.
    #[error("format error in {path} at row {row}: {message}")]
    Format {
        path: PathBuf,
        row: usize,
        message: String,
    },

    /// Well-formed input whose values violate a data invariant.
    #[error("data error: {0}")]
    Data(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    /// A mathematical precondition failed (index out of range, bad size, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (kkt residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("enumeration budget exceeded: {combinations} subsets > budget {budget}; use the greedy mode instead")]
    BudgetExceeded { combinations: u128, budget: u128 },

    #[error("missing ticker {0} in evaluation panel")]
    MissingTicker(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    /// Wraps an error with the backtest step that produced it.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Data(_) => "data",
            Error::Alignment(_) => "alignment",
            Error::Domain(_) => "domain",
            Error::Infeasible(_) => "infeasible",
            Error::NotConverged { .. } => "not_converged",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::MissingTicker(_) => "missing_ticker",
            Error::Serialization(_) => "serialization",
            Error::Context { source, .. } => source.kind(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
