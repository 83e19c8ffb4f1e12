use rand_distr::{Distribution, Normal};

use super::{Dataset, SeqRecord};
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Append,
    Prepend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseShiftSpec {
    pub noise_len: usize,
    pub placement: Placement,
    pub seed: u64,
}

/// Per-channel population mean and standard deviation.
pub(crate) fn channel_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Extend every sequence by `noise_len` Gaussian samples whose mean and
/// standard deviation match that sequence's own per-channel statistics.
pub fn add_noise_shift(ds: &Dataset, spec: &NoiseShiftSpec) -> Result<Dataset> {
    if spec.noise_len == 0 {
        return Ok(ds.clone());
    }
    let n = ds.length;
    let m = n + spec.noise_len;
    let mut rng = seeded(spec.seed);
    let mut records = Vec::with_capacity(ds.len());
    for r in &ds.records {
        let mut values = Vec::with_capacity(ds.dim * m);
        for c in 0..ds.dim {
            let src = &r.values[c * n..(c + 1) * n];
            let (mean, std) = channel_stats(src);
            let normal = Normal::new(mean, std)
                .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
            let noise = (0..spec.noise_len).map(|_| normal.sample(&mut rng));
            match spec.placement {
                Placement::Append => {
                    values.extend_from_slice(src);
                    values.extend(noise);
                }
                Placement::Prepend => {
                    values.extend(noise);
                    values.extend_from_slice(src);
                }
            }
        }
        records.push(SeqRecord {
            values,
            label: r.label,
        });
    }
    Dataset::new(ds.dim, m, ds.classes, records)
}
