//! Length-preserving dilated 1-D convolution.
//!
//! Output position `t` of channel `o` reads, for every input channel `i` and
//! tap `k`, the input at `t + offset(k)`:
//!
//! * symmetric modes (`Circular`, `Zero`): `offset(k) = (k - (K-1)/2) * d`
//! * `CausalZero`: `offset(k) = (k - (K-1)) * d`, so only `t` and earlier
//!
//! In `Circular` mode the index wraps modulo the sequence length; the zero
//! modes treat out-of-range taps as 0. The forward pass gathers every tap
//! into a `(C_in * K) x N` column buffer per sample and runs one GEMM
//! against the `C_out x (C_in * K)` weight matrix.

use std::borrow::Cow;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::gemm::{gemm, View};
use super::{LayerGrads, PaddingMode};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub padding: PaddingMode,
    /// `[out][in][k]`, row-major. With weight normalisation these are the
    /// direction parameters `v`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Per-output-channel gain `g` of weight normalisation: each filter used
    /// in the convolution is `g[o] * v[o] / |v[o]|`.
    pub gain: Option<Vec<f64>>,
}

impl ConvLayer {
    /// A layer with all parameters zero.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
        padding: PaddingMode,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::Config("convolution needs at least one channel".into()));
        }
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel size must be odd, got {kernel}")));
        }
        if dilation == 0 {
            return Err(Error::Config("dilation must be at least 1".into()));
        }
        Ok(ConvLayer {
            in_channels,
            out_channels,
            kernel,
            dilation,
            padding,
            weights: vec![0.0; out_channels * in_channels * kernel],
            bias: vec![0.0; out_channels],
            gain: None,
        })
    }

    /// Switch on weight normalisation with gains equal to the current filter
    /// norms, so the effective filters are unchanged.
    pub fn enable_weight_norm(&mut self) {
        let gain = self.filter_norms();
        self.gain = Some(gain);
    }

    fn filter_len(&self) -> usize {
        self.in_channels * self.kernel
    }

    fn filter_norms(&self) -> Vec<f64> {
        self.weights
            .chunks_exact(self.filter_len())
            .map(|f| f.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Filters as applied by the convolution.
    pub fn effective_weights(&self) -> Cow<'_, [f64]> {
        let Some(gain) = &self.gain else {
            return Cow::Borrowed(&self.weights);
        };
        let mut w = self.weights.clone();
        for ((f, norm), g) in w
            .chunks_exact_mut(self.filter_len())
            .zip(self.filter_norms())
            .zip(gain)
        {
            let scale = if norm > 0.0 { g / norm } else { 0.0 };
            f.iter_mut().for_each(|v| *v *= scale);
        }
        Cow::Owned(w)
    }

    /// `N(0, std^2)` filters and bias.
    pub fn init_normal<R: Rng + ?Sized>(&mut self, rng: &mut R, std: f64) {
        let normal = Normal::new(0.0, std).expect("finite std");
        for w in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            *w = normal.sample(rng);
        }
    }

    /// Fan-in uniform initialisation, `U(-sqrt(1/(C_in K)), +sqrt(1/(C_in K)))`, zero bias.
    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let bound = (1.0 / (self.in_channels * self.kernel) as f64).sqrt();
        for w in &mut self.weights {
            *w = rng.random_range(-bound..bound);
        }
        self.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    /// Effective filter tap `w[o][i][k]`.
    pub fn weight(&self, o: usize, i: usize, k: usize) -> f64 {
        self.effective_weights()[(o * self.in_channels + i) * self.kernel + k]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len() + self.gain.as_ref().map_or(0, Vec::len)
    }

    /// Signed position offset read by tap `k`.
    pub fn tap_offset(&self, k: usize) -> isize {
        let k = k as isize;
        let d = self.dilation as isize;
        let last = self.kernel as isize - 1;
        match self.padding {
            PaddingMode::Circular | PaddingMode::Zero => (k - last / 2) * d,
            PaddingMode::CausalZero => (k - last) * d,
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::ChannelMismatch {
                expected: self.in_channels,
                actual: x.channels(),
            });
        }
        Ok(())
    }

    fn output_shape(&self, x: &Tensor3) -> Shape {
        Shape {
            channels: self.out_channels,
            ..x.shape()
        }
    }

    /// Gather every tap of one sample into `col`, laid out `[(i, k)][t]`.
    fn im2col(&self, sample: &[f64], n: usize, col: &mut [f64]) {
        for i in 0..self.in_channels {
            let src = &sample[i * n..(i + 1) * n];
            for k in 0..self.kernel {
                let row = (i * self.kernel + k) * n;
                gather_taps(&mut col[row..row + n], src, self.tap_offset(k), self.padding);
            }
        }
    }

    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        self.check_input(x)?;
        let n = x.length();
        let cols = self.in_channels * self.kernel;
        let shape = self.output_shape(x);
        let mut out = vec![0.0; shape.numel()];
        let mut col = vec![0.0; if self.is_pointwise() { 0 } else { cols * n }];
        let effective = self.effective_weights();
        let weights = View::row_major(&effective, self.out_channels, cols);
        for (b, out_b) in out.chunks_exact_mut(self.out_channels * n).enumerate() {
            for (o, row) in out_b.chunks_exact_mut(n).enumerate() {
                row.iter_mut().for_each(|v| *v = self.bias[o]);
            }
            let sample = x.sample(b);
            let taps = if self.is_pointwise() {
                sample
            } else {
                self.im2col(sample, n, &mut col);
                &col
            };
            gemm(1.0, weights, View::row_major(taps, cols, n), 1.0, out_b);
        }
        Ok(Tensor3::from_parts(shape, out))
    }

    /// Gradients of a scalar loss given `grad_out = dL/d(forward(x))`.
    pub fn backward(&self, grad_out: &Tensor3, x: &Tensor3) -> Result<LayerGrads> {
        self.check_input(x)?;
        let expected = self.output_shape(x);
        if grad_out.shape() != expected {
            return Err(Error::ShapeMismatch {
                context: "conv1d backward",
                expected: expected.dims(),
                actual: grad_out.shape().dims(),
            });
        }
        let n = x.length();
        let cols = self.in_channels * self.kernel;
        let mut grad_weights = vec![0.0; self.weights.len()];
        let mut grad_bias = vec![0.0; self.out_channels];
        let mut grad_input = vec![0.0; x.shape().numel()];
        let mut col = vec![0.0; if self.is_pointwise() { 0 } else { cols * n }];
        let mut grad_col = vec![0.0; cols * n];
        let effective = self.effective_weights();
        let weights_t = View::row_major(&effective, self.out_channels, cols).transposed();

        for b in 0..x.batch() {
            let g = grad_out.sample(b);
            for (o, row) in g.chunks_exact(n).enumerate() {
                grad_bias[o] += row.iter().sum::<f64>();
            }
            let g_view = View::row_major(g, self.out_channels, n);
            let sample = x.sample(b);
            let taps = if self.is_pointwise() {
                sample
            } else {
                self.im2col(sample, n, &mut col);
                &col
            };
            gemm(
                1.0,
                g_view,
                View::row_major(taps, cols, n).transposed(),
                1.0,
                &mut grad_weights,
            );

            let gi = &mut grad_input[b * self.in_channels * n..(b + 1) * self.in_channels * n];
            if self.is_pointwise() {
                gemm(1.0, weights_t, g_view, 0.0, gi);
                continue;
            }
            gemm(1.0, weights_t, g_view, 0.0, &mut grad_col);
            for i in 0..self.in_channels {
                let dst = &mut gi[i * n..(i + 1) * n];
                for k in 0..self.kernel {
                    let row = (i * self.kernel + k) * n;
                    scatter_taps(dst, &grad_col[row..row + n], self.tap_offset(k), self.padding);
                }
            }
        }
        let grad_gain = self.gain.as_ref().map(|gain| {
            // w = g v / |v|:  dg = (dw . v) / |v|,  dv = (g / |v|) (dw - dg v / |v|)
            let norms = self.filter_norms();
            let mut grad_gain = vec![0.0; self.out_channels];
            for o in 0..self.out_channels {
                let range = o * cols..(o + 1) * cols;
                let (v, dw) = (&self.weights[range.clone()], &mut grad_weights[range]);
                let norm = norms[o];
                if norm == 0.0 {
                    dw.iter_mut().for_each(|d| *d = 0.0);
                    continue;
                }
                let dg = dw.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / norm;
                grad_gain[o] = dg;
                let scale = gain[o] / norm;
                for (d, &vi) in dw.iter_mut().zip(v) {
                    *d = scale * (*d - dg * vi / norm);
                }
            }
            grad_gain
        });
        Ok(LayerGrads {
            grad_weights,
            grad_bias,
            grad_gain,
            grad_input: Tensor3::from_parts(x.shape(), grad_input),
        })
    }
}

/// `dst[t] = src[t + offset]` under the padding rule.
fn gather_taps(dst: &mut [f64], src: &[f64], offset: isize, padding: PaddingMode) {
    let n = src.len();
    match padding {
        PaddingMode::Circular => {
            let s = offset.rem_euclid(n as isize) as usize;
            dst[..n - s].copy_from_slice(&src[s..]);
            dst[n - s..].copy_from_slice(&src[..s]);
        }
        PaddingMode::Zero | PaddingMode::CausalZero => {
            dst.iter_mut().for_each(|v| *v = 0.0);
            let o = offset.unsigned_abs();
            if o >= n {
                return;
            }
            if offset >= 0 {
                dst[..n - o].copy_from_slice(&src[o..]);
            } else {
                dst[o..].copy_from_slice(&src[..n - o]);
            }
        }
    }
}

/// Adjoint of [`gather_taps`]: `dst[t + offset] += g[t]` under the padding rule.
fn scatter_taps(dst: &mut [f64], g: &[f64], offset: isize, padding: PaddingMode) {
    let n = g.len();
    let add = |d: &mut [f64], s: &[f64]| d.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    match padding {
        PaddingMode::Circular => {
            let s = offset.rem_euclid(n as isize) as usize;
            add(&mut dst[s..], &g[..n - s]);
            add(&mut dst[..s], &g[n - s..]);
        }
        PaddingMode::Zero | PaddingMode::CausalZero => {
            let o = offset.unsigned_abs();
            if o >= n {
                return;
            }
            if offset >= 0 {
                add(&mut dst[o..], &g[..n - o]);
            } else {
                add(&mut dst[..n - o], &g[o..]);
            }
        }
    }
}

pub fn conv1d_forward(x: &Tensor3, layer: &ConvLayer) -> Result<Tensor3> {
    layer.forward(x)
}

pub fn conv1d_backward(grad_out: &Tensor3, x: &Tensor3, layer: &ConvLayer) -> Result<LayerGrads> {
    layer.backward(grad_out, x)
}
