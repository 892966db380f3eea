use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numeric core and the pipeline stages built on it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch{}: {detail}", layer_suffix(*.layer))]
    Shape { layer: Option<usize>, detail: String },

    #[error("invalid network at layer {layer}: {detail}")]
    InvalidNetwork { layer: usize, detail: String },

    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },

    #[error("batch is empty")]
    EmptyBatch,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite value produced by layer {layer}")]
    NonFinite { layer: usize },

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },

    #[error("invalid attack configuration: {0}")]
    InvalidAttack(String),

    #[error("input is already classified as target class {target}")]
    AlreadyTarget { target: usize },

    #[error("background width {got} does not match penultimate width {expected}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("{} record(s) lack a signature: {}", .ids.len(), .ids.join(", "))]
    MissingSignatures { ids: Vec<String> },

    #[error("labels contain a single class; both classes are required")]
    SingleClass,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn layer_suffix(layer: Option<usize>) -> String {
    match layer {
        Some(i) => alloc::format!(" at layer {i}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn shape(layer: Option<usize>, detail: impl Into<String>) -> Self {
        Error::Shape {
            layer,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
