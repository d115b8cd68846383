//! Sequential neural-network substrate: dense and 2-D convolution layers,
//! activations, losses, Adam, gradient verification and persistence.
//!
//! Tensors are `(batch, features)` matrices; convolution layers interpret the
//! feature axis as `channels × height × width`.

pub mod adam;
pub mod gradcheck;
pub mod io;
pub mod layer;
pub mod loss;
pub mod model;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use layer::{Activation, LayerSpec};
pub use model::{Gradients, Model, ModelBuilder, Param, Tape};
pub use train::{argmax_rows, evaluate_objective, fit_epoch, predict, Objective, Targets};
