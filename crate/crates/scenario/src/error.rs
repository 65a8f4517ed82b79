use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid value at `{key}`: {message}")]
    Validation { key: String, message: String },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("traces do not share a sampling grid: {0}")]
    GridMismatch(String),
    #[error("{context}: {source}")]
    Model {
        context: String,
        source: agestruct::Error,
    },
}

impl ScenarioError {
    pub fn validation(key: &str, message: impl Into<String>) -> Self {
        ScenarioError::Validation {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// Input errors (unreadable or invalid configuration) as opposed to
    /// failures during a run.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            ScenarioError::Parse(_) | ScenarioError::Validation { .. } | ScenarioError::Read { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

pub(crate) trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T>;
    fn at_key(self, key: &str) -> Result<T>;
}

impl<T> Context<T> for agestruct::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T> {
        self.map_err(|source| ScenarioError::Model {
            context: what.into(),
            source,
        })
    }

    fn at_key(self, key: &str) -> Result<T> {
        self.map_err(|e| ScenarioError::validation(key, e.to_string()))
    }
}
