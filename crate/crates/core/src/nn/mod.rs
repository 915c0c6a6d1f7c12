//! Minimal deterministic neural toolkit: LSTM layers, the denoising
//! autoencoder, Adam and the training loop.

pub mod dae;
pub mod gradcheck;
pub mod lstm;
pub mod optim;
pub mod tensor;
pub mod train;

pub use dae::{
    batch_loss, corrupt, dae_forward, dae_gradient, reconstruction_loss, DaeParams, DropoutMasks, Example, Mode,
};
pub use gradcheck::{central_difference, finite_diff, finite_diff_gradient, max_relative_error, relative_error};
pub use lstm::{lstm_forward, LstmLayerParams};
pub use optim::{adam_step, OptimizerState};
pub use tensor::{Parameters, Tensor};
pub use train::{train_dae, EarlyStopping, TrainConfig, TrainReport};
