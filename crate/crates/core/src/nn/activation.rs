use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Elementwise nonlinearity applied after each block's convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub fn forward(self, x: &Tensor3) -> Tensor3 {
        match self {
            Activation::Relu => relu(x),
            Activation::Identity => x.clone(),
        }
    }

    /// `x` is the activation's input from the forward pass.
    pub fn backward(self, grad_out: &Tensor3, x: &Tensor3) -> Result<Tensor3> {
        match self {
            Activation::Relu => relu_backward(grad_out, x),
            Activation::Identity => Ok(grad_out.clone()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

pub fn relu(x: &Tensor3) -> Tensor3 {
    x.map(|v| v.max(0.0))
}

/// Passes the gradient where `x > 0`; the subgradient at 0 is 0.
pub fn relu_backward(grad_out: &Tensor3, x: &Tensor3) -> Result<Tensor3> {
    if grad_out.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            context: "relu backward",
            expected: x.shape().dims(),
            actual: grad_out.shape().dims(),
        });
    }
    let mut g = grad_out.clone();
    for (gv, &xv) in g.values_mut().iter_mut().zip(x.values()) {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}
