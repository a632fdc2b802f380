use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("bad magic: expected `CBPM 1`")]
    BadMagic,

    #[error("malformed header: {0}")]
    BadHeader(String),

    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: u64, found: u64 },

    #[error("invalid shape {height}x{width}x{classes}: {reason}")]
    InvalidShape {
        height: usize,
        width: usize,
        classes: usize,
        reason: &'static str,
    },

    #[error("pixel ({row},{col}): probability sum {sum} outside 1 +/- 1e-4")]
    ProbabilitySum { row: usize, col: usize, sum: f64 },

    #[error("pixel ({row},{col}) class {class}: probability {value} outside [0, 1]")]
    ProbabilityRange {
        row: usize,
        col: usize,
        class: usize,
        value: f32,
    },

    #[error("pixel ({row},{col}): class index {value} out of range for {classes} classes")]
    ClassOutOfRange {
        row: usize,
        col: usize,
        value: u8,
        classes: usize,
    },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: String, right: String },

    #[error("unsupported mask PNG: {0}")]
    UnsupportedPng(String),

    #[error("PNG decode: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("PNG encode: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("missing prediction for model `{model_id}`, image `{image_id}` ({})", path.display())]
    MissingPrediction {
        model_id: String,
        image_id: String,
        path: PathBuf,
    },

    #[error("empty population: nothing to calibrate")]
    EmptyPopulation,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("model `{model_id}`, image `{image_id}`: {source}")]
    InImage {
        model_id: String,
        image_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::InFile {
            path: path.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn in_image(self, model_id: &str, image_id: &str) -> Self {
        Error::InImage {
            model_id: model_id.to_owned(),
            image_id: image_id.to_owned(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad arguments or configuration rather than
    /// by the files on disk. The CLI maps these to exit code 1, the rest to 2.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::InFile { source, .. } | Error::InImage { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
