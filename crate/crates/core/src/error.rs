use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("mixing matrix is not symmetric: |w[{i}][{j}] - w[{j}][{i}]| = {gap:e}")]
    Asymmetric { i: usize, j: usize, gap: f64 },

    #[error("mixing matrix is not doubly stochastic: {0}")]
    NotStochastic(String),

    #[error("mixing matrix has a negative entry w[{i}][{j}] = {value}")]
    NegativeEntry { i: usize, j: usize, value: f64 },

    #[error("graph is disconnected (rho = {rho})")]
    Disconnected { rho: f64 },

    #[error("no connected graph found after {attempts} draws")]
    Connectivity { attempts: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("agent index {agent} out of range for {n} agents")]
    AgentIndex { agent: usize, n: usize },

    #[error("step-size schedule exhausted at iteration {0}")]
    ScheduleExhausted(usize),

    #[error("iterates diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("invariant violated at iteration {iteration}: {detail}")]
    Invariant { iteration: usize, detail: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
