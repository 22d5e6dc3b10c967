use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or input value violates a documented invariant.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("choice index {choice} out of range for a model with {n_choices} choices")]
    ChoiceOutOfRange { choice: usize, n_choices: usize },

    #[error("value iteration did not converge in {max_iter} iterations (last sup-norm change {last_delta:e})")]
    NonConvergence { max_iter: usize, last_delta: f64 },

    #[error("degenerate bound: beta * delta_sup = {0} must be below 1")]
    DegenerateBound(f64),

    #[error("anchor set is empty")]
    EmptyAnchorSet,

    #[error("anchor refinement did not close the gap after {max_rounds} rounds (gap {gap:e}, tau {tau:e})")]
    RefinementStalled {
        max_rounds: usize,
        gap: f64,
        tau: f64,
    },

    #[error("optimizer failed: {0}")]
    OptimizerFailed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end:
    /// 2 for configuration and validation failures, 3 for numerical
    /// failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid { .. }
            | Error::ChoiceOutOfRange { .. }
            | Error::EmptyAnchorSet
            | Error::Parse { .. } => 2,
            Error::NonConvergence { .. }
            | Error::DegenerateBound(_)
            | Error::RefinementStalled { .. }
            | Error::OptimizerFailed(_) => 3,
            Error::Io { .. } => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
