//! Fully connected networks with quantized activations.

mod activation;
mod checkpoint;
mod network;
mod train;

pub use activation::{pact_quantize, sign_activation, symmetric_quantize, Activation};
pub use checkpoint::{network_fingerprint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use network::{
    argmax_first, evaluate, fold_batchnorm, Architecture, BatchNorm, ForwardTrace, LayerSpec,
    QuantLayer, QuantNetwork,
};
pub use train::{
    batch_loss, flat_params, forward_batch, loss_and_gradients, set_flat_params, train,
    train_with_hook, BatchCache, EpochMetrics, Gradients, LayerGrad, Mode, NoHook, TrainConfig,
    TrainHook, TrainOutcome, MIN_ALPHA,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QnnError {
    #[error("input has {found} features, network expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("inconsistent network: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("batch-norm parameters must be finite with non-negative variance")]
    BadBatchNorm,
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: u64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
