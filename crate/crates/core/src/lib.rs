//! Residual Jacobian spectral analysis for fully-connected residual networks.
//!
//! The crate trains small ResNets from scratch, extracts per-block Residual
//! Jacobians (the derivative of a block with respect to its input, excluding
//! the identity path), and measures how their top singular vectors and
//! values organize across depth. It also contains the Unconstrained Jacobians
//! Model, a free-matrix abstraction of the training objective whose optimum
//! can be checked against a two-parameter analytic family.

pub mod data;
pub mod error;
pub mod linalg;
pub mod rametrics;
pub mod resnet;
pub mod ujm;

pub use error::{Error, Result};
