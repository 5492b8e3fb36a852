use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A likelihood term evaluated to a zero or non-finite probability.
    #[error("evaluation error at couple {couple}, wave {wave}: {message}")]
    Evaluation {
        couple: usize,
        wave: usize,
        message: String,
    },

    /// Non-finite values in a finite-difference stencil or similar.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("optimizer failed in stage {stage}: {reason}")]
    Optimizer {
        stage: String,
        reason: String,
        last_iterate: Vec<f64>,
    },

    /// Statistic is undefined for the supplied sample (e.g. zero variance).
    #[error("degenerate result: {0}")]
    Degenerate(String),

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: String,
        message: String,
    },

    /// Structurally invalid panel or configuration.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_)
                | Error::Optimizer { .. }
                | Error::Evaluation { .. }
                | Error::Degenerate(_)
        )
    }
}
