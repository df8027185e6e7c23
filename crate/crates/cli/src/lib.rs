//! Command-line experiments: training runs, Residual Alignment metrics, the
//! Unconstrained Jacobians Model, theorem checks and an SVD benchmark. Every
//! command writes CSV tables whose `#` header records the resolved
//! configuration and seed, plus SVG figures where relevant.

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;
pub mod table;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
