use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Cholesky factorisation failed even after the largest jitter.
    #[error("matrix is not positive definite (jitter up to {max_jitter:e} tried)")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Quadrature, tabulation or other numerical failure.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Optimiser gave up; carries the best point seen so far.
    #[error("optimizer did not converge: {message} (best objective {best_value})")]
    Convergence {
        message: String,
        best: Vec<f64>,
        best_value: f64,
    },

    /// Malformed input file or record.
    #[error("schema error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Schema { line: Option<u64>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn schema(line: Option<u64>, msg: impl Into<String>) -> Self {
        Error::Schema {
            line,
            message: msg.into(),
        }
    }

    /// True for errors caused by malformed input rather than numerics.
    pub fn is_schema(&self) -> bool {
        matches!(self, Error::Schema { .. } | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
