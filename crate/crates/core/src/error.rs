//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("ingest error at line {line}: {detail}")]
    Ingest { line: usize, detail: String },

    #[error("non-finite gradient for parameter '{param}' (training divergence)")]
    NanGradient { param: String },

    #[error("non-finite loss at epoch {epoch}, step {step}; last good checkpoint: {last_checkpoint:?}")]
    NanLoss {
        epoch: usize,
        step: usize,
        last_checkpoint: Option<std::path::PathBuf>,
    },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("toml parse error: {0}")]
    Toml(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Toml(e.to_string())
    }
}
