//! From-scratch convolutional network: tensor kernels, the three depth
//! variants, Adam training with early stopping, and embedding extraction.
//!
//! Networks consume 25x150 single-channel images and are trained for
//! multi-class user classification; the rectified output of the second
//! hidden fully connected layer serves as the session embedding.

mod adam;
mod network;
pub mod ops;
mod tensor;
mod train;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use network::{
    backward, build_network, extract_embedding, forward, images_to_batch, parameter_shapes,
    Checkpoint, DepthVariant, EmbeddingVector, EpochRecord, ForwardPass, NamedArray, NetworkSpec,
    INPUT_COLS, INPUT_ROWS,
};
pub use tensor::Tensor;
pub(crate) use train::derive_seed;
pub use train::{evaluate, train_best_of_runs, train_multiclass, TrainConfig};
