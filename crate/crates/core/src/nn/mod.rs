//! Minimal convolutional network engine: tensors, layers with analytic
//! gradients, optimizers, the segmentation model and its training loop.

pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;
pub mod weights_io;

pub use model::{build_model, Description, Model, ModelConfig};
pub use optim::{AdamParams, Optimizer, OptimizerKind};
pub use tensor::{Real, Tensor};
pub use train::{build_dataset, loss_history_text, predict, train, train_with, Sample, TrainConfig, TrainOutcome};
