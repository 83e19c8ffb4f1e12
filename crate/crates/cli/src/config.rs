//! Run configuration: `section.key = value` lines over a closed schema.
//!
//! A config file is either plain `key = value` lines (with `#` comments) or
//! any artifact written by this tool, in which case only its
//! `# config key = value` header lines are read.

use std::fmt;
use std::path::Path;

use cdil::model::{Init, ModelConfig, Variant};
use cdil::nn::Activation;
use cdil::train::TrainConfig;

pub const ECHO_PREFIX: &str = "# config ";
pub const SEED_ENV: &str = "CDIL_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    Auto,
    Fixed(usize),
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Depth::Auto => f.write_str("auto"),
            Depth::Fixed(d) => write!(f, "{d}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Xor,
    Burst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XorModeKey {
    Uniform,
    Skew,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub channels: usize,
    pub kernel: usize,
    pub depth: Depth,
    pub activation: Activation,
    pub norm: bool,
    pub weight_norm: bool,
    pub init: Init,

    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub eval_batch: usize,
    pub record_time: bool,
    pub target_acc: Option<f64>,

    pub source: DataSource,
    pub n: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub mode: XorModeKey,
    pub data_seed: u64,
    pub noise_len: usize,
    pub burst_len: usize,

    pub repeats: usize,
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "model.variant",
    "model.channels",
    "model.kernel",
    "model.depth",
    "model.activation",
    "model.norm",
    "model.weight_norm",
    "model.init",
    "train.epochs",
    "train.batch",
    "train.lr",
    "train.seed",
    "train.eval_batch",
    "train.record_time",
    "train.target_acc",
    "data.source",
    "data.n",
    "data.train_count",
    "data.val_count",
    "data.test_count",
    "data.mode",
    "data.seed",
    "data.noise_len",
    "data.burst_len",
    "ablate.repeats",
];

impl RunConfig {
    /// Defaults, with both seeds taken from `default_seed`.
    pub fn with_seed(default_seed: u64) -> Self {
        RunConfig {
            variant: Variant::Cdil,
            channels: 32,
            kernel: 3,
            depth: Depth::Auto,
            activation: Activation::Relu,
            norm: false,
            weight_norm: false,
            init: Init::FanIn,
            epochs: 100,
            batch: 40,
            lr: 1e-3,
            seed: default_seed,
            eval_batch: 250,
            record_time: false,
            target_acc: None,
            source: DataSource::Xor,
            n: 32,
            train_count: 10_000,
            val_count: 10_000,
            test_count: 10_000,
            mode: XorModeKey::Uniform,
            data_seed: default_seed,
            noise_len: 0,
            burst_len: 32,
            repeats: 1,
        }
    }

    /// Defaults with the seed from the environment, if set.
    pub fn from_env() -> Result<Self, ConfigError> {
        let seed = match std::env::var(SEED_ENV) {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| ConfigError(format!("{SEED_ENV}=`{s}` is not an unsigned integer")))?,
            Err(_) => 0,
        };
        Ok(Self::with_seed(seed))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let bad = |what: &str| ConfigError(format!("{key}: expected {what}, got `{value}`"));
        let count = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
        let positive = || match value.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(bad("a positive integer")),
        };
        let flag = || match value {
            "true" | "on" | "1" => Ok(true),
            "false" | "off" | "0" => Ok(false),
            _ => Err(bad("true or false")),
        };
        let seed = || value.parse::<u64>().map_err(|_| bad("an unsigned integer"));
        match key {
            "model.variant" => self.variant = value.parse().map_err(|_| bad("cdil, dil, cnn or tcn"))?,
            "model.channels" => self.channels = positive()?,
            "model.kernel" => self.kernel = positive()?,
            "model.depth" => {
                self.depth = if value == "auto" {
                    Depth::Auto
                } else {
                    Depth::Fixed(positive().map_err(|_| bad("`auto` or a positive integer"))?)
                }
            }
            "model.activation" => {
                self.activation = Activation::parse(value).ok_or_else(|| bad("relu or identity"))?
            }
            "model.norm" => self.norm = flag()?,
            "model.weight_norm" => self.weight_norm = flag()?,
            "model.init" => self.init = Init::parse(value).map_err(|_| bad("fan-in or normal:<std>"))?,
            "train.epochs" => self.epochs = positive()?,
            "train.batch" => self.batch = positive()?,
            "train.lr" => {
                self.lr = match value.parse::<f64>() {
                    Ok(v) if v.is_finite() && v >= 0.0 => v,
                    _ => return Err(bad("a non-negative number")),
                }
            }
            "train.seed" => self.seed = seed()?,
            "train.eval_batch" => self.eval_batch = positive()?,
            "train.record_time" => self.record_time = flag()?,
            "train.target_acc" => {
                self.target_acc = match value {
                    "none" => None,
                    _ => match value.parse::<f64>() {
                        Ok(v) if (0.0..=1.0).contains(&v) => Some(v),
                        _ => return Err(bad("`none` or an accuracy in [0, 1]")),
                    },
                }
            }
            "data.source" => {
                self.source = match value {
                    "xor" => DataSource::Xor,
                    "burst" => DataSource::Burst,
                    _ => return Err(bad("xor or burst")),
                }
            }
            "data.n" => self.n = positive()?,
            "data.train_count" => self.train_count = positive()?,
            "data.val_count" => self.val_count = positive()?,
            "data.test_count" => self.test_count = positive()?,
            "data.mode" => {
                self.mode = match value {
                    "uniform" => XorModeKey::Uniform,
                    "skew" => XorModeKey::Skew,
                    _ => return Err(bad("uniform or skew")),
                }
            }
            "data.seed" => self.data_seed = seed()?,
            "data.noise_len" => self.noise_len = count()?,
            "data.burst_len" => self.burst_len = positive()?,
            "ablate.repeats" => self.repeats = positive()?,
            _ => return err(format!("unknown config key `{key}`")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "model.variant" => self.variant.to_string(),
            "model.channels" => self.channels.to_string(),
            "model.kernel" => self.kernel.to_string(),
            "model.depth" => self.depth.to_string(),
            "model.activation" => self.activation.name().to_string(),
            "model.norm" => self.norm.to_string(),
            "model.weight_norm" => self.weight_norm.to_string(),
            "model.init" => self.init.to_string(),
            "train.epochs" => self.epochs.to_string(),
            "train.batch" => self.batch.to_string(),
            "train.lr" => self.lr.to_string(),
            "train.seed" => self.seed.to_string(),
            "train.eval_batch" => self.eval_batch.to_string(),
            "train.record_time" => self.record_time.to_string(),
            "train.target_acc" => self.target_acc.map_or("none".to_string(), |v| v.to_string()),
            "data.source" => match self.source {
                DataSource::Xor => "xor",
                DataSource::Burst => "burst",
            }
            .to_string(),
            "data.n" => self.n.to_string(),
            "data.train_count" => self.train_count.to_string(),
            "data.val_count" => self.val_count.to_string(),
            "data.test_count" => self.test_count.to_string(),
            "data.mode" => match self.mode {
                XorModeKey::Uniform => "uniform",
                XorModeKey::Skew => "skew",
            }
            .to_string(),
            "data.seed" => self.data_seed.to_string(),
            "data.noise_len" => self.noise_len.to_string(),
            "data.burst_len" => self.burst_len.to_string(),
            "ablate.repeats" => self.repeats.to_string(),
            _ => return None,
        })
    }

    /// Apply one `key = value` assignment.
    pub fn assign(&mut self, line: &str) -> Result<(), ConfigError> {
        let Some((key, value)) = line.split_once('=') else {
            return err(format!("expected `section.key = value`, got `{line}`"));
        };
        self.set(key.trim(), value)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let echoed: Vec<&str> = text
            .lines()
            .filter_map(|l| l.trim_start().strip_prefix(ECHO_PREFIX))
            .collect();
        if !echoed.is_empty() {
            return echoed.into_iter().try_for_each(|l| self.assign(l));
        }
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.assign(line)
                .map_err(|e| ConfigError(format!("line {}: {}", i + 1, e.0)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
            .map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    /// `# config key = value` lines for every key.
    pub fn echo(&self) -> Vec<String> {
        KEYS.iter()
            .map(|k| format!("{ECHO_PREFIX}{k} = {}", self.get(k).expect("known key")))
            .collect()
    }

    /// Model settings for data of width `input_dim`, length `length`.
    pub fn model_config(&self, input_dim: usize, length: usize, classes: usize) -> Result<ModelConfig, cdil::Error> {
        let depth = match self.depth {
            Depth::Auto => cdil::model::depth_for_length(length)?,
            Depth::Fixed(d) => d,
        };
        let mut config = ModelConfig::new(self.variant, input_dim, depth, classes);
        config.channels = self.channels;
        config.kernel = self.kernel;
        config.seed = self.seed;
        config.activation = self.activation;
        config.norm = self.norm;
        config.weight_norm = self.weight_norm;
        config.init = self.init;
        config.validate()?;
        Ok(config)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            lr: self.lr,
            seed: self.seed,
            record_time: self.record_time,
            eval_batch: self.eval_batch,
            target_accuracy: self.target_acc,
        }
    }
}
