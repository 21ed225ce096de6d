use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    InputShape { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("activation cache does not match this network: {0}")]
    Cache(String),

    #[error("model is frozen and cannot be modified")]
    Frozen,

    #[error("model must be frozen before use: {0}")]
    Lifecycle(String),

    #[error("invalid parameter `{field}`: {reason}")]
    Param { field: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    TrainDivergence { epoch: usize },

    #[error("sigma optimization diverged at iteration {iteration}: non-finite loss")]
    SigmaDivergence { iteration: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("allocation error: {0}")]
    Allocation(String),

    #[error("insufficient capacity: {units} units but only {slots} subchannel slots")]
    Capacity { units: usize, slots: usize },

    #[error("instance too large for exhaustive search: {0}")]
    Size(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated input: {0}")]
    Length(String),

    #[error("image/label count mismatch: {images} images, {labels} labels")]
    Pairing { images: usize, labels: usize },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt artifact: {0}")]
    Corrupt(String),

    #[error("upstream artifact {path}: {source}")]
    Upstream {
        path: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for a failed command-line stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Upstream { .. } => 2,
            Error::Config(_) | Error::Param { .. } => 3,
            Error::TrainDivergence { .. } | Error::SigmaDivergence { .. } => 4,
            _ => 1,
        }
    }

    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::Param {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
