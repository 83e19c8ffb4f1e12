//! `cdil`: generate XOR data, train and evaluate dilated convolutional
//! sequence classifiers, check gradients, export feature maps and run the
//! position-shift ablations.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3 failed
//! numeric check.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, RunConfig};

#[derive(Debug)]
pub struct NumericFailure(pub String);

impl fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

#[derive(Parser)]
#[command(name = "cdil", version, about = "Circular dilated CNN sequence classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of `section.key = value` lines, or an artifact whose
    /// `# config` header should be replayed.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set model.variant=dil`. Repeatable; applied
    /// after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::from_env()?;
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for s in &self.set {
            cfg.assign(s)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write train.csv, val.csv and test.csv XOR splits.
    XorGen {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
        /// In skew mode, also write test_similar.csv drawn like the training data.
        #[arg(long)]
        similar: bool,
    },
    /// Train a model; writes a metrics CSV and the best-validation checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long, default_value = "metrics.csv")]
        metrics: PathBuf,
        #[arg(long, default_value = "model.ckpt")]
        checkpoint: PathBuf,
    },
    /// Accuracy and loss of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Append a JSON record to this file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Finite-difference check of every layer and model variant.
    Gradcheck {
        #[arg(long, env = "CDIL_SEED", default_value_t = 0)]
        seed: u64,
        /// Perturb the analytic gradients; the check must then fail.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Last-block feature map of one sequence as a channels x positions CSV.
    DumpFeatures {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Record index in the data file.
        #[arg(long, default_value_t = 0)]
        row: usize,
        #[arg(long, short)]
        out: PathBuf,
        /// Skip min-max normalisation.
        #[arg(long)]
        raw: bool,
    },
    /// Train CNN, DIL and CDIL on a position-shift task and tabulate
    /// similar and dissimilar test accuracy.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short, default_value = "ablation.csv")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::XorGen { config, out, similar } => commands::xor_gen(&config.resolve()?, &out, similar),
        Command::Train {
            config,
            train,
            val,
            metrics,
            checkpoint,
        } => commands::train(&config.resolve()?, &train, &val, &metrics, &checkpoint),
        Command::Eval { checkpoint, data, json } => commands::eval(&checkpoint, &data, json.as_deref()),
        Command::Gradcheck { seed, corrupt } => commands::run_gradcheck(seed, corrupt),
        Command::DumpFeatures {
            checkpoint,
            data,
            row,
            out,
            raw,
        } => commands::dump_features(&checkpoint, &data, row, &out, raw),
        Command::Ablate { config, out } => commands::ablate(&config.resolve()?, &out),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.is::<ConfigError>() {
        return 1;
    }
    if err.is::<NumericFailure>() {
        return 3;
    }
    match err.downcast_ref::<cdil::Error>() {
        Some(cdil::Error::Config(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
