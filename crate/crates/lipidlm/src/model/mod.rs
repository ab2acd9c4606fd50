//! Transformer encoder with task heads and hand-derived gradients.
//!
//! The parameter set lives in one flat buffer with a named-tensor layout
//! ([`params::ParamSet`]); forward caches every intermediate needed by the
//! exact backward pass. All math is generic over f32 (training) and f64
//! (the finite-difference gradient audit).

mod backward;
mod checkpoint;
mod config;
mod forward;
mod linalg;
mod params;
mod scalar;

pub use backward::backward;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointBundle};
pub use config::{ModelConfig, TaskHeadKind};
pub use forward::{
    cross_entropy_grad_scale, forward, loss, EncodedBatch, ForwardOutput, HeadLogits,
    LossBreakdown, LossWeights, Mode, IGNORE_LABEL,
};
pub use linalg::matmul;
pub use params::{Layout, ParamSet, TensorSpec};
pub use scalar::Scalar;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch has no selected MLM tokens")]
    NoSelectedTokens,
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint incompatible: {0}")]
    VersionMismatch(String),
    #[error("checkpoint corrupted: checksum mismatch on {0}")]
    ChecksumMismatch(String),
    #[error("checkpoint malformed: {0}")]
    BadCheckpoint(String),
}
