//! Labelled sequence datasets: generators, transforms, CSV I/O, splits and
//! batching.

mod burst;
mod csv;
mod noise;
mod xor;

pub use burst::{gen_burst, BurstSpec};
pub use csv::{load_csv, write_csv, CsvOptions};
pub use noise::{add_noise_shift, NoiseShiftSpec, Placement};
pub use xor::{gen_xor, xor_label, XorMode, XorSpec};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::tensor::{Shape, Tensor3};

/// One sequence, stored channel-major: `values[c * N + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqRecord {
    pub values: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Channels per element (`D`).
    pub dim: usize,
    /// Positions per sequence (`N`).
    pub length: usize,
    pub classes: usize,
    pub records: Vec<SeqRecord>,
}

impl Dataset {
    pub fn new(dim: usize, length: usize, classes: usize, records: Vec<SeqRecord>) -> Result<Self> {
        if dim == 0 || length == 0 {
            return Err(Error::Config("dataset needs D >= 1 and N >= 1".into()));
        }
        for r in &records {
            if r.values.len() != dim * length {
                return Err(Error::LengthMismatch {
                    expected: dim * length,
                    actual: r.values.len(),
                });
            }
            if r.label >= classes {
                return Err(Error::LabelOutOfRange {
                    label: r.label,
                    classes,
                });
            }
            if !r.values.iter().all(|v| v.is_finite()) {
                return Err(Error::Config("non-finite value in record".into()));
            }
        }
        Ok(Dataset {
            dim,
            length,
            classes,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Stack the given records into a `(len, D, N)` tensor.
    pub fn to_tensor(&self, indices: &[usize]) -> Result<Tensor3> {
        let shape = Shape::new(indices.len(), self.dim, self.length)?;
        let mut values = Vec::with_capacity(shape.numel());
        for &i in indices {
            values.extend_from_slice(&self.records[i].values);
        }
        Tensor3::from_vec(shape, values)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            ..self.header()
        }
    }

    fn header(&self) -> Dataset {
        Dataset {
            dim: self.dim,
            length: self.length,
            classes: self.classes,
            records: Vec::new(),
        }
    }
}

/// Seeded permutation cut into contiguous pieces of `floor(f * len)`
/// records each; the rounding remainder goes to the first piece.
pub fn split(ds: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    if fractions.is_empty() || fractions.iter().any(|&f| f.is_nan() || f <= 0.0) {
        return Err(Error::Config("split fractions must be positive".into()));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions sum to {total}, not 1")));
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let mut sizes: Vec<usize> = fractions.iter().map(|f| (f * n as f64).floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    sizes[0] += n - assigned;
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        out.push(ds.subset(&order[start..start + size]));
        start += size;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Tensor3,
    pub labels: Vec<usize>,
}

/// Batches in order, the last one possibly short.
pub struct BatchIter<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let idx = &self.order[self.next..end];
        self.next = end;
        let inputs = self.ds.to_tensor(idx).expect("records validated at construction");
        let labels = idx.iter().map(|&i| self.ds.records[i].label).collect();
        Some(Batch { inputs, labels })
    }
}

/// When `shuffle` is set, the order for `epoch` is a permutation seeded by
/// `(seed, epoch)`.
pub fn batch_iter(ds: &Dataset, batch_size: usize, shuffle: bool, seed: u64, epoch: u64) -> BatchIter<'_> {
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if shuffle {
        order.shuffle(&mut seeded(derive_seed(seed, epoch)));
    }
    BatchIter {
        ds,
        order,
        batch_size: batch_size.max(1),
        next: 0,
    }
}
