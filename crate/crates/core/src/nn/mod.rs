//! Differentiable layers with hand-written backward passes.

mod activation;
mod conv;
pub(crate) mod gemm;
mod linear;
mod norm;
mod residual;

pub use activation::{relu, relu_backward, Activation};
pub use conv::{conv1d_backward, conv1d_forward, ConvLayer};
pub use linear::{
    ensemble_readout, ensemble_readout_backward, linear_backward, linear_forward, LinearGrads,
    LinearHead,
};
pub use norm::ChannelAffine;
pub use residual::{residual_block_forward, BlockCache, BlockGrads, ResidualBlock};

use crate::tensor::Tensor3;

/// How a convolution treats taps that fall outside `[0, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PaddingMode {
    /// Wrap modulo the sequence length.
    Circular,
    /// Read zeros; kernel centred on the output position.
    Zero,
    /// Read zeros; kernel anchored so position `t` only sees `t` and earlier.
    CausalZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub grad_weights: Vec<f64>,
    pub grad_bias: Vec<f64>,
    /// Present when the layer uses weight normalisation.
    pub grad_gain: Option<Vec<f64>>,
    pub grad_input: Tensor3,
}
