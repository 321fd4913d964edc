use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid instance spec: {0}")]
    InvalidSpec(String),

    #[error("invalid agent config: {0}")]
    InvalidConfig(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid preference tensor: {count} violation(s), first: {first}")]
    InvalidTensor { count: usize, first: String },

    #[error("no Condorcet winner for user(s) {users:?}")]
    NoCondorcetWinner { users: Vec<usize> },

    #[error("instance generation failed for user {user} after {attempts} attempts")]
    GenerationFailed { user: usize, attempts: usize },

    #[error("tournament step budget of {budget} duels exhausted; unresolved users {unresolved:?}")]
    BudgetExhausted { budget: u64, unresolved: Vec<usize> },

    #[error("duel sampler failed: {0}")]
    Sampler(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed trace {path}: {reason}")]
    MalformedTrace { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
