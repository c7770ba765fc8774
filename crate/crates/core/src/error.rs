use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch on axis `{axis}` ({left} vs {right})")]
    ShapeMismatch {
        op: &'static str,
        axis: &'static str,
        left: usize,
        right: usize,
    },

    #[error("{op}: expected {expected} input channels, got {got}")]
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("invalid training config: {0}")]
    TrainConfig(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("{what} {value} out of range ({min}..={max})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },

    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),

    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },

    #[error("{0} split is empty")]
    EmptySplit(&'static str),

    #[error("dataset root {0} contains no class directories with images")]
    EmptyDataset(PathBuf),

    #[error("class `{class}` has {count} records, at least {min} required")]
    ClassTooSmall {
        class: String,
        count: usize,
        min: usize,
    },

    #[error("unknown layer `{name}`; valid layers: {}", valid.join(", "))]
    UnknownLayer { name: String, valid: Vec<String> },

    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    Mismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
