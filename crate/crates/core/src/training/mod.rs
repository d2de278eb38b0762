//! Partitioned fine-tuning: frozen/trainable labels, AdamW, the denoising
//! loss with its gate regularizer, the training loop, and checkpoints.

pub mod checkpoint;
mod data;
mod loss;
mod optimizer;
mod partition;
mod trainer;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, parameter_hashes, read_checkpoint, sha256_hex,
    tensor_hash, write_checkpoint,
};
pub use data::{conditions_for, prepare_example, Augment, EmbedMode, Example};
pub use loss::{denoising_loss_on, LossParts, LossVars};
pub use optimizer::{adamw_update, AdamConfig, AdamW, Moments};
pub use partition::{Label, ParameterPartition, Preset};
pub use trainer::{
    batch_loss, batch_loss_on, check_gradients, loss_curve_csv, train, Draw, DrawStream,
    LossRecord, TrainConfig, TrainOutcome,
};
