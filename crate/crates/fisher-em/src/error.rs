//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("unknown model name `{0}` (expected one of: sk_bk, sk_b, s_bk, s_b, akj_bk, akj_b, ak_bk, ak_b, aj_bk, aj_b, a_bk, a_b)")]
    UnknownModel(String),

    #[error("latent covariance of group {group} is singular or not positive definite")]
    SingularCovariance { group: usize },

    #[error("group {group} is degenerate: soft count {count:.3e} is below 1e-8")]
    DegenerateGroup { group: usize, count: f64 },

    #[error("between-covariance rank {available} is below the requested {requested} axes")]
    RankDeficient { requested: usize, available: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("fit aborted at iteration {iteration}: {source}")]
    FitAborted {
        iteration: usize,
        /// Log-likelihood values recorded before the failure.
        trace: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("all {attempted} restarts failed; last error: {last}")]
    AllRestartsFailed { attempted: usize, last: Box<Error> },

    #[error("all {attempted} grid cells failed")]
    AllCellsFailed { attempted: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
