use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("population size {n} exceeds the enumeration limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("empty sample: the estimated population size is zero")]
    EmptySample,

    #[error("empty population")]
    EmptyPopulation,

    #[error("{path}: row {row}: {msg}")]
    Row { path: PathBuf, row: usize, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cholesky factorization failed at pivot {pivot} (jitter tried: {jitter:e})")]
    Factorization { pivot: usize, jitter: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown format `{0}`")]
    UnknownFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
