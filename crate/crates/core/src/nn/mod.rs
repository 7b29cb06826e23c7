//! Minimal convolutional network engine with exact backpropagation.
//!
//! The layer set is fixed (convolution, max-pool, ReLU, flatten, dropout,
//! dense, softmax). Tensors are batched: the leading axis is always the sample
//! index, convolutional activations are `[N, C, H, W]` and dense activations
//! are `[N, F]`.

mod gradcheck;
mod layer;
mod loss;
mod network;
mod optim;

pub use gradcheck::{gradient_check, GradCheckReport, LayerGradError};
pub use layer::{LayerKind, LayerSpec};
pub use loss::{cross_entropy_loss, softmax_rows};
pub use network::{Cache, Gradients, Layer, Mode, Network};
pub use optim::{OptimizerConfig, Sgd};
