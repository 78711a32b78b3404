//! Lp-pooling ConvNets for digit classification.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense `f64` tensors, Gaussian windows, valid correlation, mirror padding.
//! - [`layers`]: convolution, Lp pooling, subtractive normalization, tanh, linear,
//!   concatenation and the softmax energy, each with an exact backward pass.
//! - [`preprocess`]: YUV conversion, local and global contrast normalization.
//! - [`model`]: the two-stage network in single-stage (SS) and multi-stage (MS) variants.
//! - [`data`]: the `CND1` container, IDX reader, validation split and epoch shuffling.
//! - [`training`]: per-sample SGD with inverse-time decay and L2 shrinkage, evaluation.
//! - [`experiments`]: the run manifest, CSV reports and the command implementations
//!   behind the `lpnet` binary.
//!
//! All arithmetic is `f64` and every operation is deterministic in serial mode.

pub mod data;
pub mod error;
pub mod experiments;
pub mod layers;
pub mod model;
pub mod preprocess;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use layers::PoolExponent;
pub use model::{Model, ModelConfig};
pub use tensor::{GaussianKernel, Tensor};
pub use training::{Metrics, TrainConfig};
