use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("cannot encode {path}: {message}")]
    Encode { path: PathBuf, message: String },

    #[error("unsupported bit depth in {path}: {detail}")]
    UnsupportedBitDepth { path: PathBuf, detail: String },

    #[error("unsupported channel layout in {path}: {detail}")]
    ChannelLayout { path: PathBuf, detail: String },

    #[error("unknown image format for {0} (expected .ppm or .png)")]
    UnknownFormat(PathBuf),

    #[error("label out of range: {label} >= class count {class_count}")]
    LabelOutOfRange { label: u8, class_count: usize },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("crop {x},{y} {w}x{h} outside {width}x{height} image")]
    CropOutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid image data: {0}")]
    InvalidImage(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate channel {channel}: {reason}")]
    DegenerateChannel {
        channel: usize,
        reason: &'static str,
    },

    #[error("shape mismatch in {context}: {left:?} vs {right:?}")]
    ShapeMismatch {
        context: String,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite loss {value} at {context}")]
    NonFiniteLoss { value: f64, context: String },

    #[error("malformed {what}: {message}")]
    Malformed { what: &'static str, message: String },

    #[error("{what} format version {found} not supported (expected {expected})")]
    VersionMismatch {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model has no mask channel")]
    NoMaskChannel,

    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: impl Into<String>, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}

/// Attaches a stage name to a failure, used by the experiment orchestration.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| Error::Stage {
            stage,
            source: Box::new(source),
        })
    }
}
