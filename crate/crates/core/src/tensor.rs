//! Dense `(batch, channel, position)` arrays and the few primitives the
//! convolution stack needs on top of them.
//!
//! Storage is batch-major, then channel, then position, so one channel of
//! one sample is a contiguous slice and the convolution kernels stride by
//! one over positions.

use crate::error::{Error, Result};

/// `(batch, channels, length)`; every component is at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub length: usize,
}

impl Shape {
    pub fn new(batch: usize, channels: usize, length: usize) -> Result<Self> {
        let shape = Shape {
            batch,
            channels,
            length,
        };
        if batch == 0 || channels == 0 || length == 0 {
            return Err(Error::InvalidShape(shape.dims()));
        }
        Ok(shape)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.length)
    }

    pub fn numel(&self) -> usize {
        self.batch * self.channels * self.length
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    shape: Shape,
    values: Vec<f64>,
}

impl Tensor3 {
    pub fn new_filled(shape: Shape, value: f64) -> Result<Self> {
        let shape = Shape::new(shape.batch, shape.channels, shape.length)?;
        Ok(Tensor3 {
            shape,
            values: vec![value; shape.numel()],
        })
    }

    pub fn zeros(shape: Shape) -> Result<Self> {
        Self::new_filled(shape, 0.0)
    }

    pub fn from_vec(shape: Shape, values: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(shape.batch, shape.channels, shape.length)?;
        if values.len() != shape.numel() {
            return Err(Error::LengthMismatch {
                expected: shape.numel(),
                actual: values.len(),
            });
        }
        let t = Tensor3 { shape, values };
        t.debug_check_finite();
        Ok(t)
    }

    /// Internal constructor for shapes already known to be valid.
    pub(crate) fn from_parts(shape: Shape, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), shape.numel());
        let t = Tensor3 { shape, values };
        t.debug_check_finite();
        t
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape.batch
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn length(&self) -> usize {
        self.shape.length
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    fn offset(&self, b: usize, c: usize, t: usize) -> usize {
        debug_assert!(b < self.shape.batch && c < self.shape.channels && t < self.shape.length);
        (b * self.shape.channels + c) * self.shape.length + t
    }

    pub fn get(&self, b: usize, c: usize, t: usize) -> f64 {
        self.values[self.offset(b, c, t)]
    }

    pub fn set(&mut self, b: usize, c: usize, t: usize, value: f64) {
        let i = self.offset(b, c, t);
        self.values[i] = value;
    }

    /// All channels of sample `b`, channel-major.
    pub fn sample(&self, b: usize) -> &[f64] {
        let n = self.shape.channels * self.shape.length;
        &self.values[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.shape.channels * self.shape.length;
        &mut self.values[b * n..(b + 1) * n]
    }

    pub fn row(&self, b: usize, c: usize) -> &[f64] {
        let start = self.offset(b, c, 0);
        &self.values[start..start + self.shape.length]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3::from_parts(self.shape, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Circular shift along positions: `out[t] == self[(t - shift) mod N]`.
    pub fn rotate(&self, shift: isize) -> Tensor3 {
        let n = self.shape.length;
        let s = circular_index(shift, n).expect("length >= 1");
        let mut out = vec![0.0; self.values.len()];
        for (src, dst) in self
            .values
            .chunks_exact(n)
            .zip(out.chunks_exact_mut(n))
        {
            dst[s..].copy_from_slice(&src[..n - s]);
            dst[..s].copy_from_slice(&src[n - s..]);
        }
        Tensor3::from_parts(self.shape, out)
    }

    /// Sample `b` alone as a batch of one.
    pub fn select(&self, b: usize) -> Tensor3 {
        let shape = Shape {
            batch: 1,
            ..self.shape
        };
        Tensor3::from_parts(shape, self.sample(b).to_vec())
    }

    pub fn dot(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.shape, other.shape, "dot of mismatched tensors");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn add_assign(&mut self, other: &Tensor3) {
        assert_eq!(self.shape, other.shape, "add of mismatched tensors");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        self.debug_check_finite();
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    #[inline]
    pub(crate) fn debug_check_finite(&self) {
        debug_assert!(self.all_finite(), "non-finite value in tensor {:?}", self.shape);
    }
}

/// Row-major `rows x cols` matrix, used for pooled features and logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        Ok(Matrix { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.values[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// Index of the largest entry in row `r`; ties go to the lowest index.
    pub fn argmax_row(&self, r: usize) -> usize {
        let row = self.row(r);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        best
    }
}

/// `t mod n` with a non-negative result.
pub fn circular_index(t: isize, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::Config("circular index over an empty sequence".into()));
    }
    Ok(t.rem_euclid(n as isize) as usize)
}

/// Average of every `(sample, channel)` row over positions.
pub fn mean_over_length(x: &Tensor3) -> Matrix {
    let n = x.length();
    let scale = 1.0 / n as f64;
    let values = x
        .values()
        .chunks_exact(n)
        .map(|row| row.iter().sum::<f64>() * scale)
        .collect();
    Matrix {
        rows: x.batch(),
        cols: x.channels(),
        values,
    }
}
