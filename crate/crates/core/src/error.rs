use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema build failed: {0}")]
    Schema(String),

    #[error("ingestion error in document `{doc_id}`: {msg}")]
    Ingestion { doc_id: String, msg: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("template error for `{event_type}`: {msg}")]
    Template { event_type: String, msg: String },

    #[error("unknown event type `{0}`")]
    UnknownEventType(String),

    #[error("trigger span ({start}, {end}) out of bounds for {len} tokens")]
    TriggerOutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("window of {max_len} cannot hold trigger segment of {needed} tokens")]
    WindowTooSmall { max_len: usize, needed: usize },

    #[error("sequence of length {len} exceeds {max} positions")]
    LengthOverflow { len: usize, max: usize },

    #[error("slot range ({lo}, {hi}) outside prompt of length {len}")]
    SlotRange { lo: usize, hi: usize, len: usize },

    #[error("invalid model config: {0}")]
    ModelConfig(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("vocabulary hash mismatch: checkpoint has {expected}, pipeline has {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("assignment: {0}")]
    Assignment(String),

    #[error("scoring failed, unaligned events: {0}")]
    Scoring(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn ingestion(doc_id: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Ingestion {
            doc_id: doc_id.into(),
            msg: msg.into(),
        }
    }

    pub fn template(event_type: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Template {
            event_type: event_type.into(),
            msg: msg.into(),
        }
    }

    /// Errors caused by bad user input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Ingestion { .. }
                | Error::Parse { .. }
                | Error::Template { .. }
                | Error::UnknownEventType(_)
                | Error::TriggerOutOfBounds { .. }
                | Error::WindowTooSmall { .. }
                | Error::ModelConfig(_)
                | Error::VocabMismatch { .. }
                | Error::Scoring(_)
                | Error::Config(_)
                | Error::Infeasible(_)
                | Error::Validation(_)
        )
    }
}
