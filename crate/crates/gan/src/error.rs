use thiserror::Error;

use crate::spec::Mode;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] psim_core::Error),
    #[error(transparent)]
    Net(#[from] psim_autonet::Error),
    #[error("invalid {field}: {reason}")]
    Spec { field: &'static str, reason: String },
    #[error("model mode is {found:?}, operation needs {expected:?}")]
    Mode { expected: Mode, found: Mode },
    #[error("non-finite {what} at step {step}")]
    NonFinite { step: u64, what: &'static str },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("checkpoint does not match the model: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn spec_err(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Spec {
        field,
        reason: reason.into(),
    }
}
