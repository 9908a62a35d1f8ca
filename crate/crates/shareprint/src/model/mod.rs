//! The constrained-first-layer CNN: one constrained convolutional layer,
//! four standard convolutional blocks, three fully connected layers, with
//! per-layer freeze and share controls.

mod checkpoint;
mod layers;
mod network;
mod scalar;
mod spec;
mod stack;

pub use checkpoint::{load_checkpoint, load_for_transfer, save_checkpoint, CHECKPOINT_VERSION};
pub use layers::{Activation, BatchNorm, ConvBlock, FcBlock, Layer};
pub use network::{constrained_deviation, LayerFlags, LayerMode, Network};
pub use scalar::Scalar;
pub use spec::{ConvSpec, LayerName, ModelSpec, PoolKind, PoolSpec, ALL_LAYERS};
pub use stack::{
    backward_layers, cross_entropy_grad, cross_entropy_loss, forward_eval, forward_train,
    softmax_rows, Gradients, LayerGrads, Tape,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    BadSpec(String),
    #[error("input geometry {got:?} does not match the model's {want:?} (batch, channels, height, width)")]
    BadGeometry {
        want: (usize, usize, usize, usize),
        got: (usize, usize, usize, usize),
    },
    #[error("layer {0} cannot be a freeze/share boundary (the output layer stays trainable)")]
    BadBoundary(&'static str),
    #[error("unknown layer name {0:?}")]
    UnknownLayer(String),
    #[error("checkpoint version {got} unsupported (this build reads version {want})")]
    CheckpointVersion { got: u32, want: u32 },
    #[error("corrupt checkpoint at {path}: {reason}")]
    CorruptCheckpoint {
        path: std::path::PathBuf,
        reason: String,
    },
    #[error("io error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}
