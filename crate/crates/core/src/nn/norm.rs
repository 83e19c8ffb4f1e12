use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Learned per-channel scale and shift, `y[c][t] = scale[c] * x[c][t] + shift[c]`.
///
/// Off by default; enabled through `ModelConfig::norm`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAffine {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl ChannelAffine {
    pub fn identity(channels: usize) -> Self {
        ChannelAffine {
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    fn check(&self, x: &Tensor3) -> Result<()> {
        if x.channels() != self.channels() {
            return Err(Error::ChannelMismatch {
                expected: self.channels(),
                actual: x.channels(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        self.check(x)?;
        let n = x.length();
        let c = self.channels();
        let mut out = x.clone();
        for (r, row) in out.values_mut().chunks_exact_mut(n).enumerate() {
            let (s, b) = (self.scale[r % c], self.shift[r % c]);
            row.iter_mut().for_each(|v| *v = s * *v + b);
        }
        Ok(out)
    }

    /// Returns `(grad_scale, grad_shift, grad_input)`.
    pub fn backward(&self, grad_out: &Tensor3, x: &Tensor3) -> Result<(Vec<f64>, Vec<f64>, Tensor3)> {
        self.check(x)?;
        if grad_out.shape() != x.shape() {
            return Err(Error::ShapeMismatch {
                context: "channel affine backward",
                expected: x.shape().dims(),
                actual: grad_out.shape().dims(),
            });
        }
        let n = x.length();
        let c = self.channels();
        let mut grad_scale = vec![0.0; c];
        let mut grad_shift = vec![0.0; c];
        let mut grad_input = grad_out.clone();
        for (r, (g, xr)) in grad_input
            .values_mut()
            .chunks_exact_mut(n)
            .zip(x.values().chunks_exact(n))
            .enumerate()
        {
            let ch = r % c;
            grad_scale[ch] += g.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
            grad_shift[ch] += g.iter().sum::<f64>();
            g.iter_mut().for_each(|v| *v *= self.scale[ch]);
        }
        Ok((grad_scale, grad_shift, grad_input))
    }
}
