//! Local-pattern task: Gaussian background with one short windowed sinusoid
//! whose period gives the class.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, SeqRecord};
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq)]
pub struct BurstSpec {
    pub length: usize,
    pub count: usize,
    pub burst_len: usize,
    pub amplitude: f64,
    /// Sinusoid period, in positions, for each class.
    pub periods: Vec<f64>,
    pub seed: u64,
}

impl BurstSpec {
    pub fn new(length: usize, count: usize, seed: u64) -> Self {
        BurstSpec {
            length,
            count,
            burst_len: 32,
            amplitude: 3.0,
            periods: vec![4.0, 8.0],
            seed,
        }
    }
}

/// One channel; labels are balanced in expectation and the burst start is
/// uniform over every position where it fits.
pub fn gen_burst(spec: &BurstSpec) -> Result<Dataset> {
    if spec.periods.len() < 2 {
        return Err(Error::Config("burst task needs at least two periods".into()));
    }
    if spec.burst_len == 0 || spec.burst_len > spec.length {
        return Err(Error::Config(format!(
            "burst length {} must be in 1..={}",
            spec.burst_len, spec.length
        )));
    }
    if spec.count == 0 {
        return Err(Error::Config("burst count must be at least 1".into()));
    }
    let classes = spec.periods.len();
    let mut rng = seeded(spec.seed);
    let mut records = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let label = rng.random_range(0..classes);
        let start = rng.random_range(0..=spec.length - spec.burst_len);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let mut values: Vec<f64> = (0..spec.length)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let omega = std::f64::consts::TAU / spec.periods[label];
        for j in 0..spec.burst_len {
            // Hann window keeps the burst edges smooth.
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * (j as f64 + 0.5) / spec.burst_len as f64).cos();
            values[start + j] += spec.amplitude * w * (omega * j as f64 + phase).sin();
        }
        records.push(SeqRecord { values, label });
    }
    Dataset::new(1, spec.length, classes, records)
}
