use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("plane index {index} out of range for a stack of {planes} planes")]
    IndexOutOfRange { index: usize, planes: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid stack: {0}")]
    InvalidStack(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("retain fraction {0} is outside (0, 1]")]
    RetainFraction(f64),

    #[error("noise spec is uncalibrated (lambda = {0})")]
    Uncalibrated(f64),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("backward pass requested before a training forward pass")]
    BackwardBeforeForward,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("non-finite gradient in parameter tensor {0}")]
    NonFiniteGradient(String),

    #[error("npy: {0}")]
    Npy(String),

    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("tiff: unsupported tag {tag} with value {value}: {reason}")]
    TiffUnsupported {
        tag: u16,
        value: u32,
        reason: &'static str,
    },

    #[error("tiff: {0}")]
    Tiff(String),

    #[error("checkpoint does not match network: {0}")]
    GraphMismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("split overlap: {0}")]
    SplitOverlap(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn shape_mismatch(expected: &[usize], found: &[usize]) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_vec(),
        found: found.to_vec(),
    }
}
