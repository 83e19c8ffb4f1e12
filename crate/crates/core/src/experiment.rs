//! Experiment drivers: XOR scaling runs, the position-shift ablations, and
//! feature-matrix export.

use crate::data::{
    add_noise_shift, gen_burst, gen_xor, BurstSpec, Dataset, NoiseShiftSpec, Placement, XorMode,
    XorSpec,
};
use crate::error::{Error, Result};
use crate::model::{build_model, depth_for_length, Model, ModelConfig, Variant};
use crate::rng::derive_seed;
use crate::tensor::{Matrix, Tensor3};
use crate::train::{evaluate, fit, Evaluation, FitOutcome, TrainConfig};

/// `config` with variant, input width, classes and seed filled in, and the
/// depth resolved from `length` when `auto_depth` is set.
pub fn resolve_config(
    template: &ModelConfig,
    auto_depth: bool,
    variant: Variant,
    ds: &Dataset,
    seed: u64,
) -> Result<ModelConfig> {
    let mut config = template.clone();
    config.variant = variant;
    config.input_dim = ds.dim;
    config.classes = ds.classes;
    config.seed = seed;
    if auto_depth {
        config.depth = depth_for_length(ds.length)?;
    }
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            train: 10_000,
            val: 10_000,
            test: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct XorRun {
    pub config: ModelConfig,
    pub outcome: FitOutcome,
    pub test: Evaluation,
}

impl XorRun {
    pub fn test_error(&self) -> f64 {
        1.0 - self.test.accuracy
    }
}

/// Train one model on freshly generated uniform XOR splits and score it on
/// a held-out test split. Data and model seeds are derived from `seed`.
pub fn xor_scaling_run(
    variant: Variant,
    length: usize,
    sizes: SplitSizes,
    template: &ModelConfig,
    auto_depth: bool,
    train: &TrainConfig,
    seed: u64,
) -> Result<XorRun> {
    let gen = |count, tag| gen_xor(&XorSpec::new(length, count, XorMode::Uniform, derive_seed(seed, tag)));
    let (train_ds, val_ds, test_ds) = (gen(sizes.train, 0)?, gen(sizes.val, 1)?, gen(sizes.test, 2)?);
    let config = resolve_config(template, auto_depth, variant, &train_ds, derive_seed(seed, 3))?;
    let train_cfg = TrainConfig {
        seed: derive_seed(seed, 4),
        ..train.clone()
    };
    let outcome = fit(build_model(&config)?, &train_ds, &val_ds, &train_cfg)?;
    let test = evaluate(&outcome.model, &test_ds)?;
    Ok(XorRun {
        config,
        outcome,
        test,
    })
}

/// Training data plus a test set drawn like it and one with positions moved.
#[derive(Debug, Clone)]
pub struct AblationSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub similar: Dataset,
    pub dissimilar: Dataset,
}

/// Marker positions tied to the label in training; the halves flip in the
/// dissimilar test.
pub fn xor_ablation_splits(length: usize, sizes: SplitSizes, seed: u64) -> Result<AblationSplits> {
    let gen = |count, mode, tag| gen_xor(&XorSpec::new(length, count, mode, derive_seed(seed, tag)));
    Ok(AblationSplits {
        train: gen(sizes.train, XorMode::PositionSkewTrain, 0)?,
        val: gen(sizes.val, XorMode::PositionSkewTrain, 1)?,
        similar: gen(sizes.test, XorMode::PositionSkewTrain, 2)?,
        dissimilar: gen(sizes.test, XorMode::PositionSkewFlipped, 3)?,
    })
}

/// Burst sequences with a Gaussian tail appended in training and the
/// similar test, prepended in the dissimilar test. Both tests share the
/// same underlying sequences; each split draws its own noise.
pub fn noise_ablation_splits(
    burst: &BurstSpec,
    noise_len: usize,
    sizes: SplitSizes,
    seed: u64,
) -> Result<AblationSplits> {
    let gen = |count, tag| {
        gen_burst(&BurstSpec {
            count,
            seed: derive_seed(seed, tag),
            ..burst.clone()
        })
    };
    let shift = |ds: &Dataset, placement, tag| {
        add_noise_shift(
            ds,
            &NoiseShiftSpec {
                noise_len,
                placement,
                seed: derive_seed(seed, tag),
            },
        )
    };
    let test = gen(sizes.test, 2)?;
    Ok(AblationSplits {
        train: shift(&gen(sizes.train, 0)?, Placement::Append, 10)?,
        val: shift(&gen(sizes.val, 1)?, Placement::Append, 11)?,
        similar: shift(&test, Placement::Append, 12)?,
        dissimilar: shift(&test, Placement::Prepend, 13)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub variants: Vec<Variant>,
    /// Variant, input width, classes and seed are overwritten per run.
    pub model: ModelConfig,
    pub auto_depth: bool,
    pub train: TrainConfig,
    pub repeats: usize,
    pub seed: u64,
}

impl AblationConfig {
    pub fn new(model: ModelConfig, train: TrainConfig) -> Self {
        AblationConfig {
            variants: vec![Variant::Cnn, Variant::Dil, Variant::Cdil],
            model,
            auto_depth: true,
            train,
            repeats: 1,
            seed: 0,
        }
    }
}

/// One trained model's scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRun {
    pub variant: Variant,
    pub repeat: usize,
    pub best_epoch: usize,
    pub similar: f64,
    pub dissimilar: f64,
}

/// Accuracies of one variant across repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub similar: Vec<f64>,
    pub dissimilar: Vec<f64>,
}

impl AblationRow {
    pub fn similar_stats(&self) -> (f64, f64) {
        mean_std(&self.similar)
    }

    pub fn dissimilar_stats(&self) -> (f64, f64) {
        mean_std(&self.dissimilar)
    }
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Train every variant on the same splits for each repeat. Repeat `r` draws
/// its data from `derive_seed(seed, 2r)` and its models from
/// `derive_seed(seed, 2r + 1)`.
pub fn run_ablation(
    config: &AblationConfig,
    make_splits: impl Fn(u64) -> Result<AblationSplits>,
    mut on_run: impl FnMut(&AblationRun),
) -> Result<Vec<AblationRow>> {
    if config.repeats == 0 || config.variants.is_empty() {
        return Err(Error::Config("ablation needs at least one repeat and one variant".into()));
    }
    let mut rows: Vec<AblationRow> = config
        .variants
        .iter()
        .map(|&variant| AblationRow {
            variant,
            similar: Vec::new(),
            dissimilar: Vec::new(),
        })
        .collect();
    for repeat in 0..config.repeats {
        let splits = make_splits(derive_seed(config.seed, 2 * repeat as u64))?;
        let model_seed = derive_seed(config.seed, 2 * repeat as u64 + 1);
        for row in &mut rows {
            let model_config = resolve_config(&config.model, config.auto_depth, row.variant, &splits.train, model_seed)?;
            let train = TrainConfig {
                seed: model_seed,
                ..config.train.clone()
            };
            let outcome = fit(build_model(&model_config)?, &splits.train, &splits.val, &train)?;
            let run = AblationRun {
                variant: row.variant,
                repeat,
                best_epoch: outcome.best_epoch,
                similar: evaluate(&outcome.model, &splits.similar)?.accuracy,
                dissimilar: evaluate(&outcome.model, &splits.dissimilar)?.accuracy,
            };
            row.similar.push(run.similar);
            row.dissimilar.push(run.dissimilar);
            on_run(&run);
        }
    }
    Ok(rows)
}

/// `model,similar_acc,similar_std,dissimilar_acc,dissimilar_std`, one row
/// per variant.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("model,similar_acc,similar_std,dissimilar_acc,dissimilar_std\n");
    for row in rows {
        let (sm, ss) = row.similar_stats();
        let (dm, ds) = row.dissimilar_stats();
        out.push_str(&format!("{},{sm:.6},{ss:.6},{dm:.6},{ds:.6}\n", row.variant));
    }
    out
}

/// Last-block features of a single sequence as a `C x N` matrix.
pub fn feature_matrix(model: &Model, x: &Tensor3) -> Result<Matrix> {
    if x.batch() != 1 {
        return Err(Error::ShapeMismatch {
            context: "feature dump expects one sequence",
            expected: (1, x.channels(), x.length()),
            actual: x.shape().dims(),
        });
    }
    let features = model
        .forward(x, true)?
        .features
        .expect("features were requested");
    Matrix::from_vec(features.channels(), features.length(), features.into_values())
}

/// Rescale all entries to `[0, 1]`. A constant matrix maps to all zeros.
pub fn min_max_normalize(m: &Matrix) -> Matrix {
    let (lo, hi) = m
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    let values = m
        .values()
        .iter()
        .map(|&v| if range > 0.0 { (v - lo) / range } else { 0.0 })
        .collect();
    Matrix::from_vec(m.rows(), m.cols(), values).expect("same shape")
}
