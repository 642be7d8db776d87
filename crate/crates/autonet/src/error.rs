use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by layer {layer} ({op})")]
    NonFinite { layer: usize, op: &'static str },
    #[error("checkpoint integrity check failed: header hash {expected}, blob hash {actual}")]
    Integrity { expected: String, actual: String },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
