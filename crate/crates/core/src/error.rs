use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },
    #[error("invalid parameter {name}: {reason}")]
    Param { name: &'static str, reason: String },
    #[error("non-finite value at element {index}")]
    NonFinite { index: usize },
    #[error("missing layer '{layer}' (entry '{entry}')")]
    MissingLayer { layer: String, entry: String },
    #[error("layer '{layer}': expected shape {expected:?}, got {actual:?}")]
    LayerShape {
        layer: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("label {label} at pixel {index} out of range for {num_classes} classes")]
    LabelRange {
        label: u16,
        index: usize,
        num_classes: usize,
    },
    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },
    #[error("unsupported weight format version '{found}' (expected CWFCN1)")]
    FormatVersion { found: String },
    #[error("corrupt weight entry '{entry}': {reason}")]
    Corrupt { entry: String, reason: String },
    #[error("color ({r}, {g}, {b}) at pixel ({x}, {y}) is not in the palette")]
    UnknownColor {
        r: u8,
        g: u8,
        b: u8,
        x: usize,
        y: usize,
    },
    #[error("{path}:{line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("average precision undefined: no positive pixels in ground truth")]
    NoPositives,
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Param {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the filesystem rather than by data or usage.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
