use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorefError {
    #[error("parse error in document `{doc_key}` (sentence {sentence}, token {token}): {message}")]
    Parse {
        doc_key: String,
        sentence: usize,
        token: usize,
        message: String,
    },

    #[error("framing error at line {line}: {message}")]
    Framing { line: usize, message: String },

    #[error("span ({start},{end}) is out of range for document `{doc_key}`: {message}")]
    Range {
        doc_key: String,
        start: usize,
        end: usize,
        message: String,
    },

    #[error("conflicting {field} for span ({start},{end}) in document `{doc_key}`: `{existing}` vs `{incoming}`")]
    Conflict {
        doc_key: String,
        start: usize,
        end: usize,
        field: &'static str,
        existing: String,
        incoming: String,
    },

    #[error("invalid document `{doc_key}`: {message}")]
    InvalidDocument { doc_key: String, message: String },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("sidecar line {line}: {message}")]
    Sidecar { line: usize, message: String },

    #[error(
        "document keys do not match; key only: [{key_only}], response only: [{response_only}]"
    )]
    KeyMismatch {
        key_only: String,
        response_only: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("encoder capability unavailable: {0}")]
    Capability(String),

    #[error("non-finite loss at step {step} on document `{doc_key}`")]
    NonFiniteLoss { step: usize, doc_key: String },

    #[error("checkpoint incompatible: {0}")]
    Incompatible(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CorefError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorefError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CorefError> = std::result::Result<T, E>;
