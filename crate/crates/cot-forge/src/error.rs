//! Error types for the oracle, pool, selector, and eval layers.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failures raised by completion backends and the scoring helpers built on them.
#[derive(Debug, Error)]
pub enum OracleError {
    /// No API credential was found in the environment.
    #[error("missing API credential: set {var}")]
    AuthMissing { var: String },

    /// The backend kept returning 429 after exhausting every retry.
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },

    /// The wire payload did not match the completion schema.
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),

    /// Transport-level failure or a non-retryable server error.
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    /// The request violates a field invariant and was never sent.
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),

    /// A mock prompt referenced a question id the task spec does not define.
    #[error("mock task spec has no question {0:?}")]
    UnknownQuestion(String),

    /// The gold answer produced no tokens to score.
    #[error("gold answer has no tokens")]
    EmptyGold,

    /// The response cache could not be read or written.
    #[error("cache I/O at {path}: {source}")]
    CacheIo { path: PathBuf, source: io::Error },
}

/// Failures raised while loading or validating labeled datasets.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("{path}:{line}: invalid record: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },

    #[error("{path}:{line}: duplicate question id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("{path}:{line}: gold answer for {id:?} is empty after normalization")]
    EmptyGold {
        path: PathBuf,
        line: usize,
        id: String,
    },
}

/// Failures raised by pool construction.
#[derive(Debug, Error)]
pub enum PoolError {
    /// A candidate chain references a question with no gold answer.
    #[error("no gold answer for question {0:?}")]
    MissingGold(String),

    #[error("cannot read pool {path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("pool file {path} is invalid: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Failures raised by the exemplar selector.
#[derive(Debug, Error)]
pub enum SelectorError {
    /// More slots were requested than the pool has exemplars.
    #[error("{slots} slots exceed pool size {pool_size}")]
    SlotsExceedPool { slots: usize, pool_size: usize },

    /// The variance-reduced estimator needs at least two sampled combinations.
    #[error("estimator needs at least 2 sampled combinations, got {0}")]
    SampleSizeTooSmall(usize),

    /// A sampled index carries zero probability, so its score is undefined.
    #[error("sampled index {index} has zero probability")]
    ZeroProbabilitySample { index: usize },

    /// The projection input contained NaN or infinity.
    #[error("simplex projection input is not finite")]
    NonFiniteInput,

    /// A combination referenced an exemplar index outside the pool.
    #[error("exemplar index {index} out of range for pool of {pool_size}")]
    IndexOutOfRange { index: usize, pool_size: usize },

    /// A structural parameter (slot count, epochs, batch size, rows…) is
    /// unusable.
    #[error("invalid selector configuration: {0}")]
    InvalidConfig(String),

    /// The checkpoint file does not describe a valid trained selection.
    #[error("invalid checkpoint {path}: {reason}")]
    CheckpointInvalid { path: PathBuf, reason: String },

    #[error("cannot access checkpoint {path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Failures raised by evaluation.
#[derive(Debug, Error)]
pub enum EvalError {
    /// Majority voting over an empty ballot is undefined.
    #[error("majority vote over an empty ballot")]
    EmptyBallot,

    /// A hop report was requested but the dataset carries no hop annotations.
    #[error("dataset has no hop annotations")]
    NoHopAnnotations,

    #[error("cannot access predictions {path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("{path}:{line}: invalid prediction record: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },

    #[error(transparent)]
    Selector(#[from] SelectorError),

    #[error(transparent)]
    Oracle(#[from] OracleError),
}
