//! Differentiable building blocks: tensors, a gradient tape, parameters,
//! pointwise MLPs and hierarchical point-set encoders.

mod adam;
mod checkpoint;
mod encoder;
mod layers;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, read_checkpoint, write_checkpoint, Checkpoint,
};
pub use encoder::{pose_input, EncoderCache, EncoderConfig, EncoderLevel, PointEncoder};
pub use layers::{Decoder, Linear};
pub use params::{fnv1a, GarmentCode, ParamId, ParameterStore};
pub use tape::{Gradients, SparseRows, Tape, Var};
pub use tensor::Tensor;

use crate::geom::GeomError;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("backward called without a recorded forward evaluation")]
    NoForward,
    #[error("loss must be a 1x1 scalar, got {}x{}", .0.0, .0.1)]
    NonScalarLoss((usize, usize)),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("{what}: expected width {expected}, got {got}")]
    WidthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what}: expected {expected} rows, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("duplicate parameter '{0}'")]
    DuplicateParameter(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Geom(#[from] GeomError),
}
