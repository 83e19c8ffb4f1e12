//! Long-sequence XOR: channel 0 holds uniform values, channel 1 holds two
//! markers, and the label says whether the two marked values fall in
//! different halves of `[0, 1)`.

use rand::seq::index;
use rand::Rng;

use super::{Dataset, SeqRecord};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Where the two markers may land.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum XorMode {
    /// Anywhere in `[0, N)`.
    Uniform,
    /// Both in `[0, N/2)` for class 0, both in `[N/2, N)` for class 1.
    PositionSkewTrain,
    /// The halves of `PositionSkewTrain` swapped.
    PositionSkewFlipped,
}

impl XorMode {
    pub fn name(self) -> &'static str {
        match self {
            XorMode::Uniform => "uniform",
            XorMode::PositionSkewTrain => "skew-train",
            XorMode::PositionSkewFlipped => "skew-flipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XorSpec {
    pub length: usize,
    pub count: usize,
    pub mode: XorMode,
    pub seed: u64,
}

impl XorSpec {
    pub fn new(length: usize, count: usize, mode: XorMode, seed: u64) -> Self {
        XorSpec {
            length,
            count,
            mode,
            seed,
        }
    }
}

/// 0 when both values are below 0.5 or both at or above it, else 1.
pub fn xor_label(x1: f64, x2: f64) -> Result<usize> {
    for x in [x1, x2] {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::ValueOutOfRange(x));
        }
    }
    Ok(usize::from((x1 >= 0.5) != (x2 >= 0.5)))
}

pub fn gen_xor(spec: &XorSpec) -> Result<Dataset> {
    let n = spec.length;
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::Config(format!("XOR length must be even and >= 4, got {n}")));
    }
    if spec.count == 0 {
        return Err(Error::Config("XOR count must be at least 1".into()));
    }
    let half = n / 2;
    let mut rng = seeded(spec.seed);
    let mut records = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let x1: f64 = rng.random();
        let x2: f64 = rng.random();
        let label = xor_label(x1, x2)?;
        let (lo, width) = match (spec.mode, label) {
            (XorMode::Uniform, _) => (0, n),
            (XorMode::PositionSkewTrain, 0) | (XorMode::PositionSkewFlipped, 1) => (0, half),
            _ => (half, half),
        };
        let picks = index::sample(&mut rng, width, 2);
        let (p1, p2) = (lo + picks.index(0), lo + picks.index(1));

        let mut values = vec![0.0; 2 * n];
        for (t, v) in values[..n].iter_mut().enumerate() {
            *v = if t == p1 {
                x1
            } else if t == p2 {
                x2
            } else {
                rng.random()
            };
        }
        values[n + p1] = 1.0;
        values[n + p2] = 1.0;
        records.push(SeqRecord { values, label });
    }
    Dataset::new(2, n, 2, records)
}
