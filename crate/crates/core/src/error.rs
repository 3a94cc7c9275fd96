//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by attribution, interaction and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Two instances that must share a length do not.
    #[error("composition error: expected length {expected}, got {actual}")]
    Composition { expected: usize, actual: usize },

    /// A quantity is undefined for the given input (e.g. entropy over one label).
    #[error("domain error: {0}")]
    Domain(String),

    /// The black-box model failed or returned something unusable.
    #[error("model evaluation failed: {0}")]
    Evaluation(String),

    /// Donor or completion sampling failed.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// Conditioning on an event of zero probability.
    #[error("conditioning error: {0}")]
    Conditioning(String),

    /// `p(y | observation) = 0`, so a log-ratio would be negative infinity.
    #[error("p(y | {0}) = 0: pointwise mutual information is -inf")]
    NegativeInfinity(String),

    /// Exhaustive enumeration requested beyond the supported size.
    #[error("capacity error: n = {n} exceeds the limit of {limit}")]
    Capacity { n: usize, limit: usize },

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid argument to an operation.
    #[error("argument error: {0}")]
    Argument(String),

    /// A faithfulness metric is undefined for some instance.
    #[error("metric error on instance {instance}: {reason}")]
    Metric { instance: usize, reason: String },

    /// Malformed input file.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
