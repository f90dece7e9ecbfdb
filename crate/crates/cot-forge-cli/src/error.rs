//! CLI error surface: every failure maps to a stable machine-readable code
//! and one of the documented exit classes (2 config, 3 data, 4 oracle,
//! 5 internal invariant).

use std::io;

use cot_forge::{DatasetError, EvalError, OracleError, PoolError, SelectorError};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ORACLE: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub exit: i32,
    pub message: String,
}

impl CliError {
    pub fn config(code: &'static str, message: impl Into<String>) -> Self {
        CliError { code, exit: EXIT_CONFIG, message: message.into() }
    }

    pub fn data(code: &'static str, message: impl Into<String>) -> Self {
        CliError { code, exit: EXIT_DATA, message: message.into() }
    }

    pub fn oracle(code: &'static str, message: impl Into<String>) -> Self {
        CliError { code, exit: EXIT_ORACLE, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError { code: "INTERNAL", exit: EXIT_INTERNAL, message: message.into() }
    }

    /// One-line JSON for stderr.
    pub fn render_json(&self) -> String {
        serde_json::json!({
            "error": { "code": self.code, "exit": self.exit, "message": self.message }
        })
        .to_string()
    }
}

fn is_not_found(err: &io::Error) -> bool {
    err.kind() == io::ErrorKind::NotFound
}

impl From<DatasetError> for CliError {
    fn from(err: DatasetError) -> Self {
        let code = match &err {
            DatasetError::Io { source, .. } if is_not_found(source) => "DATASET_NOT_FOUND",
            DatasetError::Io { .. } => "DATASET_IO",
            DatasetError::Record { .. } | DatasetError::DuplicateId { .. }
            | DatasetError::EmptyGold { .. } => "DATASET_INVALID",
        };
        CliError::data(code, err.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(err: OracleError) -> Self {
        match &err {
            OracleError::AuthMissing { .. } => CliError::config("AUTH_MISSING", err.to_string()),
            OracleError::RateLimited { .. } => {
                CliError::oracle("ORACLE_RATE_LIMITED", err.to_string())
            }
            OracleError::MalformedResponse(_) => {
                CliError::oracle("ORACLE_MALFORMED", err.to_string())
            }
            OracleError::BackendUnavailable(_) => {
                CliError::oracle("ORACLE_UNAVAILABLE", err.to_string())
            }
            OracleError::InvalidRequest(_) => {
                CliError::oracle("ORACLE_INVALID_REQUEST", err.to_string())
            }
            OracleError::UnknownQuestion(_) => {
                CliError::oracle("ORACLE_UNKNOWN_QUESTION", err.to_string())
            }
            OracleError::EmptyGold => CliError::oracle("ORACLE_EMPTY_GOLD", err.to_string()),
            OracleError::CacheIo { .. } => CliError::oracle("CACHE_IO", err.to_string()),
        }
    }
}

impl From<PoolError> for CliError {
    fn from(err: PoolError) -> Self {
        match err {
            PoolError::MissingGold(_) => CliError::data("DATASET_INVALID", err.to_string()),
            PoolError::Io { ref source, .. } if is_not_found(source) => {
                CliError::data("POOL_NOT_FOUND", err.to_string())
            }
            PoolError::Io { .. } => CliError::data("POOL_IO", err.to_string()),
            PoolError::Parse { .. } => CliError::data("POOL_INVALID", err.to_string()),
            PoolError::Oracle(inner) => inner.into(),
        }
    }
}

impl From<SelectorError> for CliError {
    fn from(err: SelectorError) -> Self {
        match err {
            SelectorError::SlotsExceedPool { .. } => {
                CliError::data("POOL_TOO_SMALL", err.to_string())
            }
            SelectorError::SampleSizeTooSmall(_) | SelectorError::InvalidConfig(_) => {
                CliError::config("CONFIG_INVALID", err.to_string())
            }
            SelectorError::CheckpointInvalid { .. } => {
                CliError::data("CHECKPOINT_INVALID", err.to_string())
            }
            SelectorError::Io { ref source, .. } if is_not_found(source) => {
                CliError::data("CHECKPOINT_NOT_FOUND", err.to_string())
            }
            SelectorError::Io { .. } => CliError::data("CHECKPOINT_IO", err.to_string()),
            SelectorError::ZeroProbabilitySample { .. }
            | SelectorError::NonFiniteInput
            | SelectorError::IndexOutOfRange { .. } => CliError::internal(err.to_string()),
            SelectorError::Oracle(inner) => inner.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        match err {
            EvalError::EmptyBallot => CliError::internal(err.to_string()),
            EvalError::NoHopAnnotations => {
                CliError::data("NO_HOP_ANNOTATIONS", err.to_string())
            }
            EvalError::Io { ref source, .. } if is_not_found(source) => {
                CliError::data("PREDICTIONS_NOT_FOUND", err.to_string())
            }
            EvalError::Io { .. } => CliError::data("PREDICTIONS_IO", err.to_string()),
            EvalError::Parse { .. } => CliError::data("PREDICTIONS_INVALID", err.to_string()),
            EvalError::Selector(inner) => inner.into(),
            EvalError::Oracle(inner) => inner.into(),
        }
    }
}
