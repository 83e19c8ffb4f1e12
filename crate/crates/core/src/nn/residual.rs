use super::{Activation, ChannelAffine, ConvLayer};
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// `out = act(norm(conv(x))) + skip(x)`, where `skip` is the identity when
/// the channel counts agree and a pointwise projection otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv: ConvLayer,
    pub projection: Option<ConvLayer>,
    pub norm: Option<ChannelAffine>,
    pub activation: Activation,
}

/// Activations kept from the forward pass for the backward sweep.
#[derive(Debug, Clone)]
pub struct BlockCache {
    pub input: Tensor3,
    pub conv_out: Tensor3,
    /// Normalised conv output; `None` when the block has no normalisation.
    pub normed: Option<Tensor3>,
}

impl BlockCache {
    /// Input to the activation function.
    pub fn pre_activation(&self) -> &Tensor3 {
        self.normed.as_ref().unwrap_or(&self.conv_out)
    }
}

#[derive(Debug, Clone)]
pub struct BlockGrads {
    /// One entry per parameter array, in [`ResidualBlock::params`] order.
    pub params: Vec<Vec<f64>>,
    pub grad_input: Tensor3,
}

impl ResidualBlock {
    pub fn new(conv: ConvLayer, activation: Activation, norm: bool) -> Result<Self> {
        let projection = if conv.in_channels != conv.out_channels {
            Some(ConvLayer::new(
                conv.in_channels,
                conv.out_channels,
                1,
                1,
                conv.padding,
            )?)
        } else {
            None
        };
        let norm = norm.then(|| ChannelAffine::identity(conv.out_channels));
        Ok(ResidualBlock {
            conv,
            projection,
            norm,
            activation,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.conv.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels
    }

    /// Parameter arrays: conv weights, conv bias, conv gain, then norm scale
    /// and shift, then projection weights and bias, skipping absent parts.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.conv.weights, &self.conv.bias];
        if let Some(g) = &self.conv.gain {
            out.push(g);
        }
        if let Some(n) = &self.norm {
            out.push(&n.scale);
            out.push(&n.shift);
        }
        if let Some(p) = &self.projection {
            out.push(&p.weights);
            out.push(&p.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.conv.weights, &mut self.conv.bias];
        if let Some(g) = &mut self.conv.gain {
            out.push(g);
        }
        if let Some(n) = &mut self.norm {
            out.push(&mut n.scale);
            out.push(&mut n.shift);
        }
        if let Some(p) = &mut self.projection {
            out.push(&mut p.weights);
            out.push(&mut p.bias);
        }
        out
    }

    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor3) -> Result<(Tensor3, BlockCache)> {
        let conv_out = self.conv.forward(x)?;
        let normed = match &self.norm {
            Some(n) => Some(n.forward(&conv_out)?),
            None => None,
        };
        let mut out = self.activation.forward(normed.as_ref().unwrap_or(&conv_out));
        match &self.projection {
            Some(p) => out.add_assign(&p.forward(x)?),
            None => out.add_assign(x),
        }
        let cache = BlockCache {
            input: x.clone(),
            conv_out,
            normed,
        };
        Ok((out, cache))
    }

    pub fn backward(&self, grad_out: &Tensor3, cache: &BlockCache) -> Result<BlockGrads> {
        if grad_out.shape() != cache.conv_out.shape() {
            return Err(Error::ShapeMismatch {
                context: "residual backward",
                expected: cache.conv_out.shape().dims(),
                actual: grad_out.shape().dims(),
            });
        }
        let mut grad = self.activation.backward(grad_out, cache.pre_activation())?;
        let mut norm_grads = None;
        if let Some(n) = &self.norm {
            let (gs, gb, gi) = n.backward(&grad, &cache.conv_out)?;
            norm_grads = Some((gs, gb));
            grad = gi;
        }
        let conv = self.conv.backward(&grad, &cache.input)?;
        let mut grad_input = conv.grad_input;
        let mut params = vec![conv.grad_weights, conv.grad_bias];
        params.extend(conv.grad_gain);
        if let Some((gs, gb)) = norm_grads {
            params.push(gs);
            params.push(gb);
        }
        match &self.projection {
            Some(p) => {
                let pg = p.backward(grad_out, &cache.input)?;
                grad_input.add_assign(&pg.grad_input);
                params.push(pg.grad_weights);
                params.push(pg.grad_bias);
            }
            None => grad_input.add_assign(grad_out),
        }
        Ok(BlockGrads { params, grad_input })
    }
}

pub fn residual_block_forward(x: &Tensor3, block: &ResidualBlock) -> Result<Tensor3> {
    block.forward(x)
}
