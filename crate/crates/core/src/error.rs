use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GclError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GclError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient capacity: {0}")]
    Capacity(String),

    #[error("invalid batch composition: {0}")]
    Composition(String),

    #[error("invalid affinity: {0}")]
    Affinity(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GclError {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        GclError::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GclError::Io {
            path: path.into(),
            source,
        }
    }
}
