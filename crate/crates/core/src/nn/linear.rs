//! Position-wise classifier head and the averaging readout built on it.
//!
//! Averaging commutes with an affine map, so applying the head at every
//! position and averaging the logits equals averaging the features and
//! applying the head once. The readout takes the cheap route.

use rand::Rng;

use super::gemm::{gemm, View};
use crate::error::{Error, Result};
use crate::tensor::{mean_over_length, Matrix, Tensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out][in]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub grad_weights: Vec<f64>,
    pub grad_bias: Vec<f64>,
    pub grad_input: Matrix,
}

impl LinearHead {
    pub fn new(in_features: usize, out_features: usize) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::Config("linear head needs nonzero widths".into()));
        }
        Ok(LinearHead {
            in_features,
            out_features,
            weights: vec![0.0; in_features * out_features],
            bias: vec![0.0; out_features],
        })
    }

    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let bound = (1.0 / self.in_features as f64).sqrt();
        for w in &mut self.weights {
            *w = rng.random_range(-bound..bound);
        }
        self.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn check(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.in_features {
            return Err(Error::ChannelMismatch {
                expected: self.in_features,
                actual: features.cols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, features: &Matrix) -> Result<Matrix> {
        self.check(features)?;
        let rows = features.rows();
        let mut out = Matrix::zeros(rows, self.out_features);
        for r in 0..rows {
            out.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm(
            1.0,
            View::row_major(features.values(), rows, self.in_features),
            View::row_major(&self.weights, self.out_features, self.in_features).transposed(),
            1.0,
            out.values_mut(),
        );
        Ok(out)
    }

    pub fn backward(&self, grad_logits: &Matrix, features: &Matrix) -> Result<LinearGrads> {
        self.check(features)?;
        if grad_logits.rows() != features.rows() || grad_logits.cols() != self.out_features {
            return Err(Error::ShapeMismatch {
                context: "linear backward",
                expected: (features.rows(), self.out_features, 1),
                actual: (grad_logits.rows(), grad_logits.cols(), 1),
            });
        }
        let rows = features.rows();
        let g = View::row_major(grad_logits.values(), rows, self.out_features);
        let mut grad_weights = vec![0.0; self.weights.len()];
        gemm(
            1.0,
            g.transposed(),
            View::row_major(features.values(), rows, self.in_features),
            0.0,
            &mut grad_weights,
        );
        let mut grad_bias = vec![0.0; self.out_features];
        for r in 0..rows {
            for (gb, v) in grad_bias.iter_mut().zip(grad_logits.row(r)) {
                *gb += v;
            }
        }
        let mut grad_input = Matrix::zeros(rows, self.in_features);
        gemm(
            1.0,
            g,
            View::row_major(&self.weights, self.out_features, self.in_features),
            0.0,
            grad_input.values_mut(),
        );
        Ok(LinearGrads {
            grad_weights,
            grad_bias,
            grad_input,
        })
    }
}

pub fn linear_forward(features: &Matrix, head: &LinearHead) -> Result<Matrix> {
    head.forward(features)
}

pub fn linear_backward(grad_logits: &Matrix, features: &Matrix, head: &LinearHead) -> Result<LinearGrads> {
    head.backward(grad_logits, features)
}

/// Class logits averaged over every position of `features`.
pub fn ensemble_readout(features: &Tensor3, head: &LinearHead) -> Result<Matrix> {
    if features.channels() != head.in_features {
        return Err(Error::ChannelMismatch {
            expected: head.in_features,
            actual: features.channels(),
        });
    }
    head.forward(&mean_over_length(features))
}

/// Head gradients plus the gradient with respect to the per-position features.
pub fn ensemble_readout_backward(
    grad_logits: &Matrix,
    features: &Tensor3,
    head: &LinearHead,
) -> Result<(Vec<f64>, Vec<f64>, Tensor3)> {
    let pooled = mean_over_length(features);
    let grads = head.backward(grad_logits, &pooled)?;
    let n = features.length();
    let scale = 1.0 / n as f64;
    let mut grad_features = vec![0.0; features.shape().numel()];
    for (row, &g) in grad_features
        .chunks_exact_mut(n)
        .zip(grads.grad_input.values())
    {
        row.iter_mut().for_each(|v| *v = g * scale);
    }
    Ok((
        grads.grad_weights,
        grads.grad_bias,
        Tensor3::from_parts(features.shape(), grad_features),
    ))
}
