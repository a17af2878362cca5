use thiserror::Error;

use crate::scheme::Trajectory;

/// Errors raised by the solver and its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or incompatible configuration; each entry names the offending key(s).
    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    /// An argument outside the domain of a pointwise function (e.g. a kernel at `x == y`).
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition of an operation was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An iterative method failed to converge or a factorization broke down.
    #[error("numerical error: {message} (residual {residual:.3e})")]
    Numerical {
        message: String,
        residual: f64,
        best: Option<Vec<f64>>,
    },

    /// A time-stepping run aborted; the trajectory up to the failed step is kept.
    #[error("run aborted at step {step}: {source}")]
    Run {
        step: usize,
        partial: Box<Trajectory>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub(crate) fn numerical(msg: impl Into<String>, residual: f64) -> Self {
        Error::Numerical {
            message: msg.into(),
            residual,
            best: None,
        }
    }

    /// Strips a [`Error::Run`] wrapper down to the underlying cause.
    pub fn root(&self) -> &Error {
        match self {
            Error::Run { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
