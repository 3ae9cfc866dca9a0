use std::path::PathBuf;

use thiserror::Error;

use crate::bank::ArtefactClass;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed annotation document: {0}")]
    MalformedDocument(String),

    #[error("unknown artefact class {0:?}")]
    UnknownClass(String),

    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),

    #[error("annotation bounding box lies outside the scan")]
    OutsideScan,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("samples have zero variance")]
    ZeroVariance,

    #[error("sample {0} is not strictly positive")]
    NonPositiveSample(f64),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("no sprites of class {0} in the bank")]
    EmptyClassBank(ArtefactClass),

    #[error("sprite reference {0} is not in the bank")]
    InvalidSpriteRef(usize),

    #[error("no fitted model for class {0}")]
    MissingModel(ArtefactClass),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("image {width}x{height} is smaller than required {min}x{min}")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("no patch supplied for origin {0:?}")]
    MissingPatch((usize, usize)),

    #[error("empty threshold list")]
    EmptyThresholds,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
