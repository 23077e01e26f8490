//! Minimal CNN inference engine: 3×3 convolution, ReLU, 2×2 max pooling and
//! global average pooling, enough to run a VGG16 trunk up to its fifth
//! pooling layer.

pub mod bench;
mod conv;
mod network;
mod ops;
mod weights;

pub use conv::{conv2d, conv2d_reference};
pub use network::{forward, forward_to_pool5, LayerSpec, NetworkSpec, INPUT_SIZE};
pub use ops::{gap, maxpool2, relu};
pub use weights::{load_weights, read_weights, save_weights, write_weights, WeightBundle, WeightEntry};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("network/weights mismatch: {0}")]
    Mismatch(String),
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("invalid weight file: {0}")]
    Format(#[from] WeightFormatError),
}

/// Failures reading or writing an `HDFW` weight file. Each corruption mode
/// has its own variant so callers can tell them apart.
#[derive(Debug, Error)]
pub enum WeightFormatError {
    #[error("bad magic: expected HDFW, found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported weight format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated bundle: {0}")]
    Truncated(String),
    #[error("malformed bundle: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
