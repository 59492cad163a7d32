use std::path::PathBuf;

use thiserror::Error;

use crate::verifier::VerificationOutcome;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sequence length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("linear program is {0}")]
    LpStatus(crate::lp_solver::LpStatus),

    #[error(
        "worker {worker_index}: plan not verified after {iterations} tightening steps \
         (last: {failures}/{trials} failures, level {level}, epsilon {epsilon:e})",
        failures = last.failures, trials = last.trials, level = last.level
    )]
    VerificationExhausted {
        worker_index: usize,
        iterations: usize,
        epsilon: f64,
        last: VerificationOutcome,
    },

    #[error("design matrix is rank deficient ({0})")]
    RankDeficient(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
