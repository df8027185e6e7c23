//! Fully-connected residual networks trained from scratch.
//!
//! A model is an input layer `h₁ = relu(W₀x + b₀)`, `L` residual blocks with
//! branch `F(h) = W_b · relu(W_a h + b_a) + b_b`, and a linear classifier.

mod backprop;
mod checkpoint;
mod forward;
mod jacobian;
mod model;
mod train;

pub use backprop::{final_features, loss_and_grads, predict_logits, Batch};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC, VERSION};
pub use forward::{forward, ForwardTrace};
pub use jacobian::{residual_jacobian, residual_jacobians};
pub use model::{init_model, ActivationStyle, Block, Linear, ModelConfig, ModelParams};
pub use train::{accuracy, cosine_lr, train, train_from, EpochRecord, TrainConfig};
