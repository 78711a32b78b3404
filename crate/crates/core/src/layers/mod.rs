//! Differentiable layers. Every layer exposes a forward pass and an exact
//! backward pass returning [`LayerGrads`].

mod activation;
mod concat;
mod conv;
mod linear;
mod loss;
mod norm;
mod pool;

pub use activation::{tanh_backward, tanh_forward};
pub use concat::{concat_features, split_features};
pub use conv::ConvLayer;
pub use linear::LinearLayer;
pub use loss::softmax_nll;
pub use norm::SubtractiveNorm;
pub use pool::{pool_window, pool_window_grad, LpPoolConfig, PoolExponent};

use crate::tensor::Tensor;

/// Gradients produced by a backward pass. Parameterless layers leave
/// `weights` and `bias` empty.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Option<Tensor>,
    pub bias: Option<Tensor>,
    pub input: Tensor,
}

impl LayerGrads {
    pub(crate) fn input_only(input: Tensor) -> Self {
        Self {
            weights: None,
            bias: None,
            input,
        }
    }
}
