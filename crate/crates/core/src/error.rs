use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Structural misuse: dimension mismatches, invalid generator parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed runtime input (non-finite features, bad one-hot vectors).
    #[error("input error: {0}")]
    Input(String),

    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Config text that does not parse as YAML or JSON.
    #[error("parse error: {0}")]
    Parse(String),

    /// Config that parses but violates a declared constraint.
    #[error("validation error: {0}")]
    Validation(String),

    /// Randomized generator exhausted its retry budget.
    #[error("generation error: {0}")]
    Generation(String),

    /// Data partitioning could not satisfy its constraints.
    #[error("partition error: {0}")]
    Partition(String),

    /// Train/val/test split produced an empty part.
    #[error("split error: {0}")]
    Split(String),

    /// Peer evaluation against an empty or unusable sample set.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Incompatible model shapes during aggregation.
    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
