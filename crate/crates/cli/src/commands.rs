use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Result;
use cdil::data::{gen_xor, load_csv, write_csv, BurstSpec, CsvOptions, Dataset, XorMode, XorSpec};
use cdil::experiment::{
    ablation_csv, feature_matrix, min_max_normalize, noise_ablation_splits, run_ablation,
    xor_ablation_splits, AblationConfig, SplitSizes,
};
use cdil::gradcheck::{gradcheck, GradcheckOptions};
use cdil::model::{build_model, depth_warning};
use cdil::rng::derive_seed;
use cdil::train::{checkpoint_load, checkpoint_save, evaluate, fit_with, EpochMetrics};

use crate::config::{DataSource, RunConfig, XorModeKey};
use crate::NumericFailure;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| cdil::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    let file = File::create(path).map_err(|e| cdil::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufWriter::new(file))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> cdil::Error + '_ {
    move |e| cdil::Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn print_header(lines: &[String]) {
    for l in lines {
        println!("{l}");
    }
}

pub fn xor_gen(cfg: &RunConfig, out: &Path, similar: bool) -> Result<()> {
    let echo = cfg.echo();
    let (train_mode, test_mode) = match cfg.mode {
        XorModeKey::Uniform => (XorMode::Uniform, XorMode::Uniform),
        XorModeKey::Skew => (XorMode::PositionSkewTrain, XorMode::PositionSkewFlipped),
    };
    let mut files = vec![
        ("train.csv", cfg.train_count, train_mode, 0),
        ("val.csv", cfg.val_count, train_mode, 1),
        ("test.csv", cfg.test_count, test_mode, 2),
    ];
    if similar && cfg.mode == XorModeKey::Skew {
        files.push(("test_similar.csv", cfg.test_count, train_mode, 3));
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    print_header(&echo);
    for (name, count, mode, tag) in files {
        let spec = XorSpec::new(cfg.n, count, mode, derive_seed(cfg.data_seed, tag));
        let ds = gen_xor(&spec)?;
        let path = out.join(name);
        let mut comments = echo.clone();
        comments.push(format!("split {name} mode {}", mode.name()));
        let comments: Vec<String> = comments
            .iter()
            .map(|c| c.trim_start_matches("# ").to_string())
            .collect();
        write_csv(&ds, &path, &comments)?;
        println!("wrote {} ({} rows, mode {})", path.display(), ds.len(), mode.name());
    }
    Ok(())
}

fn load(path: &Path) -> Result<Dataset> {
    Ok(load_csv(path, &CsvOptions::default())?)
}

pub fn metrics_header() -> &'static str {
    "epoch,train_loss,train_acc,val_loss,val_acc,seconds"
}

fn metrics_row(m: &EpochMetrics) -> String {
    format!(
        "{},{},{},{},{},{}",
        m.epoch, m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy, m.seconds
    )
}

pub fn train(
    cfg: &RunConfig,
    train_path: &Path,
    val_path: &Path,
    metrics_path: &Path,
    checkpoint_path: &Path,
) -> Result<()> {
    let train = load(train_path)?;
    let val = load(val_path)?;
    if (val.dim, val.length, val.classes) != (train.dim, train.length, train.classes) {
        return Err(cdil::Error::ShapeMismatch {
            context: "validation data must match training data (D, N, classes)",
            expected: (train.dim, train.length, train.classes),
            actual: (val.dim, val.length, val.classes),
        }
        .into());
    }
    let model_cfg = cfg.model_config(train.dim, train.length, train.classes)?;
    let mut header = cfg.echo();
    header.push(format!(
        "# resolved D={} N={} classes={} L={} params={}",
        train.dim,
        train.length,
        train.classes,
        model_cfg.depth,
        cdil::model::param_count(&model_cfg)
    ));
    print_header(&header);
    if let Some(w) = depth_warning(&model_cfg, train.length) {
        eprintln!("warning: {w}");
    }

    let mut metrics = create(metrics_path)?;
    let io = io_err(metrics_path);
    for h in &header {
        writeln!(metrics, "{h}").map_err(&io)?;
    }
    writeln!(metrics, "{}", metrics_header()).map_err(&io)?;
    let mut write_err = None;
    let outcome = fit_with(build_model(&model_cfg)?, &train, &val, &cfg.train_config(), |m| {
        if write_err.is_none() {
            if let Err(e) = writeln!(metrics, "{}", metrics_row(m)) {
                write_err = Some(e);
            }
        }
        eprintln!(
            "epoch {:4}  train_loss {:.4}  train_acc {:.4}  val_loss {:.4}  val_acc {:.4}",
            m.epoch, m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy
        );
    })?;
    if let Some(e) = write_err {
        return Err(io(e).into());
    }
    metrics.flush().map_err(&io)?;
    checkpoint_save(checkpoint_path, &outcome.model, &outcome.optimizer)?;
    let best = &outcome.metrics[outcome.best_epoch - 1];
    println!(
        "best_epoch {} val_acc {:.4} checkpoint {}",
        outcome.best_epoch,
        best.val_accuracy,
        checkpoint_path.display()
    );
    Ok(())
}

fn json_str(s: &str) -> serde_json::Value {
    serde_json::Value::String(s.to_string())
}

pub fn eval(checkpoint: &Path, data: &Path, json: Option<&Path>) -> Result<()> {
    let ckpt = checkpoint_load(checkpoint)?;
    let ds = load(data)?;
    let result = evaluate(&ckpt.model, &ds)?;
    let c = &ckpt.model.config;
    println!(
        "# model variant={} D={} C={} L={} K={} classes={}",
        c.variant, c.input_dim, c.channels, c.depth, c.kernel, c.classes
    );
    println!("accuracy {:.4}", result.accuracy);
    println!("loss {:.6}", result.loss);
    if let Some(path) = json {
        let record = serde_json::json!({
            "checkpoint": json_str(&checkpoint.display().to_string()),
            "data": json_str(&data.display().to_string()),
            "variant": c.variant.name(),
            "count": ds.len(),
            "accuracy": result.accuracy,
            "loss": result.loss,
        });
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        writeln!(f, "{record}").map_err(io_err(path))?;
    }
    Ok(())
}

pub fn run_gradcheck(seed: u64, corrupt: bool) -> Result<()> {
    let opts = GradcheckOptions {
        seed,
        corrupt,
        ..GradcheckOptions::default()
    };
    let report = gradcheck(&opts)?;
    println!("# gradcheck seed={seed} step={} tolerance={}", opts.step, opts.tolerance);
    for c in &report.checks {
        println!(
            "{:4}  {:<32} max_rel_err {:.3e}  checked {:4}  skipped {}",
            if c.passed(report.tolerance) { "ok" } else { "FAIL" },
            c.name,
            c.max_rel_error,
            c.checked,
            c.skipped
        );
    }
    if report.passed() {
        println!("all {} checks passed (max {:.3e})", report.checks.len(), report.max_rel_error());
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed(report.tolerance)).count();
        Err(NumericFailure(format!("{failed} of {} gradient checks failed", report.checks.len())).into())
    }
}

pub fn dump_features(checkpoint: &Path, data: &Path, row: usize, out: &Path, raw: bool) -> Result<()> {
    let ckpt = checkpoint_load(checkpoint)?;
    let ds = load(data)?;
    if row >= ds.len() {
        return Err(cdil::Error::Config(format!("row {row} out of range for {} records", ds.len())).into());
    }
    let x = ds.to_tensor(&[row])?;
    let features = feature_matrix(&ckpt.model, &x)?;
    let features = if raw { features } else { min_max_normalize(&features) };
    let mut w = create(out)?;
    let io = io_err(out);
    let c = &ckpt.model.config;
    writeln!(
        w,
        "# features variant={} row={row} label={} channels={} positions={} scale={}",
        c.variant,
        ds.records[row].label,
        features.rows(),
        features.cols(),
        if raw { "raw" } else { "min-max" }
    )
    .map_err(&io)?;
    for r in 0..features.rows() {
        let line: Vec<String> = features.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(&io)?;
    }
    w.flush().map_err(&io)?;
    println!("wrote {} ({} x {})", out.display(), features.rows(), features.cols());
    Ok(())
}

pub fn ablate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let header = cfg.echo();
    print_header(&header);
    let sizes = SplitSizes {
        train: cfg.train_count,
        val: cfg.val_count,
        test: cfg.test_count,
    };
    // Input width and classes are filled in per run from the data.
    let mut ablation = AblationConfig::new(cfg.model_config(1, cfg.n + cfg.noise_len, 2)?, cfg.train_config());
    ablation.auto_depth = matches!(cfg.depth, crate::config::Depth::Auto);
    ablation.repeats = cfg.repeats;
    ablation.seed = cfg.data_seed;
    let report = |r: &cdil::experiment::AblationRun| {
        eprintln!(
            "repeat {} {:<5} best_epoch {:3}  similar {:.4}  dissimilar {:.4}",
            r.repeat, r.variant, r.best_epoch, r.similar, r.dissimilar
        )
    };
    let rows = match cfg.source {
        DataSource::Xor => run_ablation(&ablation, |s| xor_ablation_splits(cfg.n, sizes, s), report)?,
        DataSource::Burst => {
            let mut burst = BurstSpec::new(cfg.n, cfg.train_count, 0);
            burst.burst_len = cfg.burst_len;
            run_ablation(&ablation, |s| noise_ablation_splits(&burst, cfg.noise_len, sizes, s), report)?
        }
    };
    let table = ablation_csv(&rows);
    let mut w = create(out)?;
    let io = io_err(out);
    for h in &header {
        writeln!(w, "{h}").map_err(&io)?;
    }
    w.write_all(table.as_bytes()).map_err(&io)?;
    w.flush().map_err(&io)?;
    print!("{table}");
    Ok(())
}
