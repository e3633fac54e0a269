//! Error type shared by all core operations.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors surfaced by tensor, model, and pipeline operations.
///
/// Non-finite values are hard errors everywhere; nothing in this crate
/// propagates a NaN or infinity silently.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor construction or an op received inconsistent dimensions.
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    /// Dimension constraint violated (inner dims, divisibility, ...).
    DimMismatch { op: &'static str, detail: String },
    /// A NaN or infinity appeared where a finite value is required.
    NonFinite { op: &'static str },
    /// Requested attention layer does not exist in the trace or model.
    LayerOutOfRange { layer: usize, layers: usize },
    /// The trace was not recorded, so backward/frozen replay is impossible.
    TraceNotRecorded,
    /// A token sequence exceeds the encoder's maximum input length.
    Overlong { len: usize, max: usize },
    /// The captioner was handed an empty patch subset.
    EmptySubset,
    /// A configuration parameter is out of its valid range.
    InvalidParam { name: &'static str, detail: String },
    /// Weight container is missing a tensor required by the manifest.
    MissingTensor { name: String },
    /// Weight container holds a tensor with the wrong shape.
    TensorShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    /// A question record lacks human captions but the human-caption arm
    /// was requested.
    MissingHumanCaptions { id: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, expected, actual } => {
                write!(f, "{op}: shape mismatch, expected {expected:?}, got {actual:?}")
            }
            Error::DimMismatch { op, detail } => write!(f, "{op}: {detail}"),
            Error::NonFinite { op } => write!(f, "{op}: non-finite value"),
            Error::LayerOutOfRange { layer, layers } => {
                write!(f, "layer {layer} out of range (model has {layers})")
            }
            Error::TraceNotRecorded => write!(f, "attention trace was not recorded"),
            Error::Overlong { len, max } => {
                write!(f, "input length {len} exceeds maximum encoder length {max}")
            }
            Error::EmptySubset => write!(f, "patch subset is empty"),
            Error::InvalidParam { name, detail } => write!(f, "invalid {name}: {detail}"),
            Error::MissingTensor { name } => write!(f, "container missing tensor '{name}'"),
            Error::TensorShape { name, expected, actual } => {
                write!(f, "tensor '{name}': expected shape {expected:?}, got {actual:?}")
            }
            Error::MissingHumanCaptions { id } => {
                write!(f, "question '{id}' has no human captions")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
