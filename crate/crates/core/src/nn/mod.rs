//! A small neural-network engine with the two allocator architectures.
//!
//! Batches are `ndarray` matrices with one sample per row. Convolutions use
//! an im2col expansion so the heavy lifting is plain matrix products.

mod adam;
mod file;
pub mod gradcheck;
mod io_map;
mod layer;
mod loss;
mod model;
mod train;

pub use adam::{adam_step, AdamParams, AdamState};
pub use file::{load_model, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use io_map::{
    decode_allocation, denormalize_power, normalize_power, preprocess_batch, preprocess_input, training_tensors,
    PowerDecoding,
};
pub use layer::{Activation, Layer, LayerGrad, LayerSpec};
pub use loss::{loss_total, softmax_rows, LossWeights, Target, Targets, LOG_CLAMP};
pub use model::{
    build_cnn, build_dnn, Arch, BatchOutput, ForwardTrace, Gradients, Model, ModelOutput, NetDims, DEFAULT_KERNEL,
};
pub use train::{train, train_on, EpochStats, TrainingConfig};
