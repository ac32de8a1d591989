use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the segmentation pipeline and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("first-frame mask for instance {instance} has no pixel above 0.5")]
    EmptyFirstMask { instance: usize },

    #[error("descriptor is the zero vector")]
    ZeroDescriptor,

    #[error("descriptor lengths differ: {0} vs {1}")]
    DescriptorLength(usize, usize),

    #[error("refiner `{refiner}` violated its contract: {reason}")]
    RefinerContract { refiner: String, reason: String },

    #[error("frame index {index} out of range for a sequence of {len} frames")]
    FrameIndex { index: usize, len: usize },

    #[error("invalid synthetic scene: {0}")]
    SceneValidation(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{}: missing frame index {missing}", dir.display())]
    SequenceGap { dir: PathBuf, missing: usize },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that indicate a misbehaving component rather than bad input.
    pub fn is_contract_violation(&self) -> bool {
        matches!(
            self,
            Error::RefinerContract { .. }
                | Error::ZeroDescriptor
                | Error::DescriptorLength(..)
                | Error::DimensionMismatch { .. }
        )
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        if self.is_contract_violation() {
            2
        } else {
            1
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
