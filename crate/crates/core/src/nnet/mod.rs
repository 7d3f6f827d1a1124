//! Transformer-encoder regressor in double precision: dense tensors,
//! hand-derived reverse-mode gradients, Adam, and binary checkpoints.

mod adam;
mod checkpoint;
mod encoder;
mod loss;
mod model;
pub mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    decode as decode_checkpoint, encode as encode_checkpoint, load_model, load_model_with_meta, save_model,
    save_model_with_meta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use encoder::{backward_from_output, encoder_forward, forward_cached, ForwardCache, ForwardMode};
pub use loss::{backward, loss_mse, TargetStats};
pub use model::{parameter_specs, EncoderConfig, Gradients, Pooling, PredictorModel};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation after layer {0}")]
    NonFiniteActivation(usize),
    #[error("sample {0} has no real tokens to pool")]
    MaskEmpty(usize),
    #[error("target {target} has zero spread in the training split")]
    StatsDegenerate { target: usize },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("checkpoint i/o: {0}")]
    Io(std::io::Error),
}
