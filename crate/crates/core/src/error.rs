use thiserror::Error;

use crate::convex::SolveStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("UE {ue} is degenerate: {reason}")]
    DegenerateUe { ue: usize, reason: String },

    #[error("modeling error: {0}")]
    Modeling(String),

    #[error("solver stopped with status {status:?} after {iterations} iterations: {context}")]
    Solver {
        status: SolveStatus,
        iterations: usize,
        context: String,
    },

    #[error("setup {setup} (seed {seed}, stream {stream}) failed: {source}")]
    Setup {
        setup: usize,
        seed: u64,
        stream: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
