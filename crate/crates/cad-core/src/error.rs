use std::path::PathBuf;
use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum CadError {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("optimizer step rejected: non-finite gradient in `{param}` at step {step}")]
    NonFiniteGradient { param: String, step: u64 },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: u64, loss: f64 },

    #[error("checkpoint format error in {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Msg(String),
}

impl CadError {
    pub fn contract(msg: impl Into<String>) -> Self {
        CadError::Contract(msg.into())
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CadError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn checkpoint(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        CadError::Checkpoint {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CadError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CadError>;
