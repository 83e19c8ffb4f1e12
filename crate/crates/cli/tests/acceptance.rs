//! End-to-end acceptance suite. Prints one `[PASS]` or `[FAIL]` line per
//! criterion and exits nonzero if any fails.
//!
//! `CDIL_ACCEPT=1,4,9` runs a subset. `CDIL_ACCEPT_LONG=1` adds the
//! N = 2048 XOR run, which takes many hours on one core.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use cdil::data::BurstSpec;
use cdil::experiment::{
    noise_ablation_splits, run_ablation, xor_ablation_splits, xor_scaling_run, AblationConfig,
    AblationRow, AblationRun, SplitSizes,
};
use cdil::gradcheck::{gradcheck, GradcheckOptions};
use cdil::model::depth_for_length;
use cdil::nn::{ensemble_readout, ConvLayer, LinearHead, PaddingMode};
use cdil::train::TrainConfig;
use cdil::{build_model, Model, ModelConfig, Shape, Tensor3, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, b: usize, c: usize, n: usize) -> Tensor3 {
    let v = (0..b * c * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor3::from_vec(Shape::new(b, c, n).unwrap(), v).unwrap()
}

/// Random architecture with every parameter nudged off its initial value.
fn random_model(rng: &mut ChaCha8Rng, variant: Variant, input_dim: usize) -> Model {
    let mut cfg = ModelConfig::new(variant, input_dim, rng.random_range(1..=6), rng.random_range(2..=4));
    cfg.channels = rng.random_range(2..=6);
    cfg.kernel = [3, 5][rng.random_range(0..2)];
    cfg.norm = rng.random_bool(0.3);
    cfg.weight_norm = rng.random_bool(0.3);
    cfg.seed = rng.random();
    let mut model = build_model(&cfg).unwrap();
    for p in model.params_mut() {
        p.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    }
    model
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let seeds = 0..20u64;
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    let mut checks = 0;
    for seed in seeds.clone() {
        let report = gradcheck(&GradcheckOptions { seed, ..GradcheckOptions::default() }).map_err(|e| e.to_string())?;
        worst = worst.max(report.max_rel_error());
        checks += report.checks.len();
        for c in report.checks.iter().filter(|c| !c.passed(1e-5)) {
            failed.push(format!("seed {seed} {}", c.name));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        failed.is_empty() && worst < 1e-5 && secs < 60.0,
        format!(
            "{checks} layer/model checks over {} seeds, max rel err {worst:.3e} (< 1e-5), {secs:.1}s (< 60s){}",
            seeds.count(),
            if failed.is_empty() { String::new() } else { format!(", failing: {}", failed.join(", ")) }
        ),
    )
}

fn rotation_gap(model: &Model, x: &Tensor3) -> f64 {
    let base = model.forward(x, false).unwrap().logits;
    (1..x.length() as isize)
        .map(|s| max_abs_diff(base.values(), model.forward(&x.rotate(s), false).unwrap().logits.values()))
        .fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cdil_worst = 0.0f64;
    for _ in 0..100 {
        let dim = rng.random_range(1..=3);
        let model = random_model(&mut rng, Variant::Cdil, dim);
        let x = random_tensor(&mut rng, 2, dim, 64);
        cdil_worst = cdil_worst.max(rotation_gap(&model, &x));
    }
    let mut dil_best = 0.0f64;
    let mut dil_violators = 0;
    for _ in 0..100 {
        let dim = rng.random_range(1..=3);
        let model = random_model(&mut rng, Variant::Dil, dim);
        let x = random_tensor(&mut rng, 1, dim, 64);
        let gap = rotation_gap(&model, &x);
        dil_best = dil_best.max(gap);
        if gap > 1e-3 {
            dil_violators += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        cdil_worst <= 1e-8 && dil_violators > 0 && secs < 60.0,
        format!(
            "100 CDIL models, all 64 rotations: max gap {cdil_worst:.2e} (<= 1e-8); \
             DIL violators {dil_violators}/100, largest gap {dil_best:.3} (> 1e-3); {secs:.1}s"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (b, c, n, k) = (
            rng.random_range(1..=4),
            rng.random_range(1..=8),
            rng.random_range(1..=64),
            rng.random_range(2..=6),
        );
        let scale = [1.0, 10.0][rng.random_range(0..2)];
        let features = random_tensor(&mut rng, b, c, n).map(|v| v * scale);
        let mut head = LinearHead::new(c, k).unwrap();
        head.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        head.bias.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        let pooled = ensemble_readout(&features, &head).unwrap();
        for s in 0..b {
            for class in 0..k {
                let mut acc = 0.0;
                for t in 0..n {
                    let mut z = head.bias[class];
                    for ch in 0..c {
                        z += head.weights[class * c + ch] * features.get(s, ch, t);
                    }
                    acc += z;
                }
                worst = worst.max((acc / n as f64 - pooled.get(s, class)).abs());
            }
        }
    }
    check(
        worst <= 1e-10,
        format!("1000 cases, mean-then-linear vs linear-then-mean max diff {worst:.2e} (<= 1e-10)"),
    )
}

/// `out[o][t] = b[o] + sum_i sum_k w[o][i][k] x[i][t + offset(k)]` with the
/// weight-normalised filter rebuilt from its direction and gain.
fn interpret(layer: &ConvLayer, x: &Tensor3) -> Tensor3 {
    let (batch, _, n) = x.shape().dims();
    let (cin, k_len, d) = (layer.in_channels, layer.kernel as isize, layer.dilation as isize);
    let filter = cin * layer.kernel;
    let tap = |o: usize, i: usize, k: usize| {
        let v = layer.weights[(o * cin + i) * layer.kernel + k];
        match &layer.gain {
            None => v,
            Some(g) => {
                let norm = layer.weights[o * filter..(o + 1) * filter].iter().map(|w| w * w).sum::<f64>().sqrt();
                g[o] * v / norm
            }
        }
    };
    let mut out = Tensor3::zeros(Shape::new(batch, layer.out_channels, n).unwrap()).unwrap();
    for b in 0..batch {
        for o in 0..layer.out_channels {
            for t in 0..n as isize {
                let mut acc = layer.bias[o];
                for i in 0..cin {
                    for k in 0..k_len {
                        let offset = match layer.padding {
                            PaddingMode::CausalZero => (k - (k_len - 1)) * d,
                            _ => (k - (k_len - 1) / 2) * d,
                        };
                        let src = t + offset;
                        let value = match layer.padding {
                            PaddingMode::Circular => x.get(b, i, src.rem_euclid(n as isize) as usize),
                            _ if src < 0 || src >= n as isize => 0.0,
                            _ => x.get(b, i, src as usize),
                        };
                        acc += tap(o, i, k as usize) * value;
                    }
                }
                out.set(b, o, t as usize, acc);
            }
        }
    }
    out
}

fn random_conv(rng: &mut ChaCha8Rng, mode: PaddingMode) -> ConvLayer {
    let cin = rng.random_range(1..=4);
    let cout = rng.random_range(1..=4);
    let kernel = [1, 3, 5, 7][rng.random_range(0..4)];
    let dilation = rng.random_range(1..=8);
    let mut layer = ConvLayer::new(cin, cout, kernel, dilation, mode).unwrap();
    layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    layer.bias.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    layer
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let modes = [PaddingMode::Circular, PaddingMode::Zero, PaddingMode::CausalZero];
    let mut worst = 0.0f64;
    for case in 0..10_000 {
        let mut layer = random_conv(&mut rng, modes[case % 3]);
        if rng.random_bool(0.25) {
            layer.enable_weight_norm();
            if let Some(g) = layer.gain.as_mut() {
                g.iter_mut().for_each(|v| *v = rng.random_range(0.1..2.0));
            }
        }
        let n = rng.random_range(1..=40);
        let batch = rng.random_range(1..=3);
        let x = random_tensor(&mut rng, batch, layer.in_channels, n);
        let fast = layer.forward(&x).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(fast.values(), interpret(&layer, &x).values()));
    }
    let mut mismatches = 0;
    for _ in 0..1000 {
        let circ = random_conv(&mut rng, PaddingMode::Circular);
        let mut zero = circ.clone();
        zero.padding = PaddingMode::Zero;
        let n = rng.random_range(1..=40);
        let x = random_tensor(&mut rng, 1, circ.in_channels, n);
        let pad = (circ.kernel - 1) / 2 * circ.dilation;
        let wide = n + 2 * pad;
        let mut ext = Tensor3::zeros(Shape::new(1, circ.in_channels, wide).unwrap()).unwrap();
        for c in 0..circ.in_channels {
            for j in 0..wide {
                ext.set(0, c, j, x.get(0, c, (j as isize - pad as isize).rem_euclid(n as isize) as usize));
            }
        }
        let a = circ.forward(&x).unwrap();
        let b = zero.forward(&ext).unwrap();
        for o in 0..circ.out_channels {
            if a.row(0, o) != &b.row(0, o)[pad..pad + n] {
                mismatches += 1;
            }
        }
    }
    check(
        worst <= 1e-10 && mismatches == 0,
        format!(
            "10000 fuzz cases vs literal interpreter max diff {worst:.2e} (<= 1e-10); \
             wrap-extend + zero-pad + crop, 1000 cases, {mismatches} inexact rows (0)"
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let template = ModelConfig::new(Variant::Cdil, 2, 4, 2);
    let train = TrainConfig::default();
    let mut errors = Vec::new();
    for variant in [Variant::Cdil, Variant::Tcn, Variant::Cnn] {
        let run = xor_scaling_run(variant, 32, SplitSizes::default(), &template, true, &train, 5)
            .map_err(|e| e.to_string())?;
        eprintln!(
            "  criterion 5: {variant} L={} best epoch {} test error {:.4}",
            run.config.depth,
            run.outcome.best_epoch,
            run.test_error()
        );
        errors.push(run.test_error());
    }
    let (cdil, tcn, cnn) = (errors[0], errors[1], errors[2]);
    check(
        cdil <= 0.02 && tcn >= 0.30 && cnn >= 0.10,
        format!(
            "XOR N=32 L=4 C=32, 100 epochs: CDIL err {cdil:.4} (<= 0.02), TCN err {tcn:.4} (>= 0.30), \
             CNN err {cnn:.4} (>= 0.10); {:.0}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn xor_length_run(length: usize, channels: usize, sizes: SplitSizes, epochs: usize, bound: f64) -> Outcome {
    let start = Instant::now();
    let mut template = ModelConfig::new(Variant::Cdil, 2, 1, 2);
    template.channels = channels;
    let train = TrainConfig {
        epochs,
        target_accuracy: Some(0.99),
        ..TrainConfig::default()
    };
    let run = xor_scaling_run(Variant::Cdil, length, sizes, &template, true, &train, 6).map_err(|e| e.to_string())?;
    let err = run.test_error();
    check(
        err <= bound,
        format!(
            "XOR N={length} L={} C={channels}: CDIL test err {err:.4} (<= {bound}) after {} epochs (best {}); {:.0}s",
            run.config.depth,
            run.outcome.metrics.len(),
            run.outcome.best_epoch,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    xor_length_run(256, 16, SplitSizes { train: 10_000, val: 2000, test: 2000 }, 80, 0.05)
}

fn criterion_6_long() -> Outcome {
    xor_length_run(2048, 32, SplitSizes::default(), 100, 0.03)
}

fn progress(label: &'static str) -> impl FnMut(&AblationRun) {
    move |r| {
        eprintln!(
            "  {label}: seed {} {} best epoch {} similar {:.4} dissimilar {:.4}",
            r.repeat, r.variant, r.best_epoch, r.similar, r.dissimilar
        )
    }
}

fn row(rows: &[AblationRow], variant: Variant) -> (f64, f64) {
    let r = rows.iter().find(|r| r.variant == variant).expect("variant was run");
    (r.similar_stats().0, r.dissimilar_stats().0)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut model = ModelConfig::new(Variant::Cdil, 2, 1, 2);
    model.channels = 16;
    let train = TrainConfig {
        epochs: 70,
        target_accuracy: Some(0.99),
        ..TrainConfig::default()
    };
    let mut config = AblationConfig::new(model, train);
    config.repeats = 5;
    config.seed = 7;
    let sizes = SplitSizes { train: 10_000, val: 2000, test: 2000 };
    let rows = run_ablation(&config, |s| xor_ablation_splits(256, sizes, s), progress("criterion 7"))
        .map_err(|e| e.to_string())?;
    let (cnn, dil, cdil) = (row(&rows, Variant::Cnn), row(&rows, Variant::Dil), row(&rows, Variant::Cdil));
    check(
        cdil.0 >= 0.95 && cdil.1 >= 0.95 && dil.0 >= 0.95 && dil.1 <= 0.20 && cnn.0 <= 0.60 && cnn.1 <= 0.60,
        format!(
            "skew XOR N=256, 5 seeds, mean similar/dissimilar: CNN {:.4}/{:.4} (<= 0.60 both), \
             DIL {:.4}/{:.4} (>= 0.95 / <= 0.20), CDIL {:.4}/{:.4} (>= 0.95 both); {:.0}s",
            cnn.0,
            cnn.1,
            dil.0,
            dil.1,
            cdil.0,
            cdil.1,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut model = ModelConfig::new(Variant::Cdil, 1, 1, 2);
    model.channels = 16;
    let train = TrainConfig {
        epochs: 15,
        ..TrainConfig::default()
    };
    let mut config = AblationConfig::new(model, train);
    config.variants = vec![Variant::Dil, Variant::Cdil];
    config.repeats = 2;
    config.seed = 8;
    let burst = BurstSpec::new(64, 0, 0);
    let sizes = SplitSizes { train: 4000, val: 1000, test: 2000 };
    let rows = run_ablation(&config, |s| noise_ablation_splits(&burst, 192, sizes, s), progress("criterion 8"))
        .map_err(|e| e.to_string())?;
    let (dil, cdil) = (row(&rows, Variant::Dil), row(&rows, Variant::Cdil));
    let (dil_drop, cdil_gap) = (dil.0 - dil.1, (cdil.0 - cdil.1).abs());
    check(
        cdil_gap <= 0.03 && dil_drop >= 0.20,
        format!(
            "burst N=64 + 192 noise, 2 seeds, mean similar/dissimilar: DIL {:.4}/{:.4} (drop {:.1} pts, >= 20), \
             CDIL {:.4}/{:.4} (gap {:.1} pts, <= 3); {:.0}s",
            dil.0,
            dil.1,
            100.0 * dil_drop,
            cdil.0,
            cdil.1,
            100.0 * cdil_gap,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut cases = vec![(1024, 9), (4000, 11), (5000, 12), (3750, 11)];
    cases.extend((2..=24).map(|n| (1usize << n, n - 1)));
    let wrong: Vec<String> = cases
        .iter()
        .filter_map(|&(len, want)| match depth_for_length(len) {
            Ok(got) if got == want => None,
            got => Some(format!("{len}: got {got:?}, want {want}")),
        })
        .collect();
    check(
        wrong.is_empty(),
        format!(
            "{} lengths (1024, 3750, 4000, 5000 and 2^2..2^24) exact{}",
            cases.len(),
            if wrong.is_empty() { String::new() } else { format!(", wrong: {}", wrong.join("; ")) }
        ),
    )
}

fn cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cdil"))
        .env_remove("CDIL_SEED")
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("cdil {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path();
    let data = [
        "--set", "data.n=32", "--set", "data.train_count=400", "--set", "data.val_count=200",
        "--set", "data.test_count=100", "--set", "data.seed=10",
    ];
    cli(&[&["xor-gen", "--out", "data"][..], &data].concat(), path)?;
    let train = |tag: &str| {
        let metrics = format!("{tag}.csv");
        let ckpt = format!("{tag}.ckpt");
        cli(
            &[
                "train", "--train", "data/train.csv", "--val", "data/val.csv", "--metrics", &metrics,
                "--checkpoint", &ckpt, "--set", "model.channels=8", "--set", "train.epochs=4",
                "--set", "train.batch=20", "--set", "train.seed=3",
            ],
            path,
        )?;
        let read = |f: &str| fs::read(path.join(f)).map_err(|e| e.to_string());
        Ok::<_, String>((read(&metrics)?, read(&ckpt)?))
    };
    let (m1, c1) = train("a")?;
    let (m2, c2) = train("b")?;
    let rows = String::from_utf8_lossy(&m1).lines().filter(|l| !l.starts_with('#')).count();
    check(
        m1 == m2 && c1 == c2 && rows == 5,
        format!(
            "two seeded CLI training runs: metrics CSV ({} bytes, {rows} lines) identical: {}, \
             checkpoint ({} bytes) identical: {}",
            m1.len(),
            m1 == m2,
            c1.len(),
            c1 == c2
        ),
    )
}

fn main() -> ExitCode {
    let selected: Option<Vec<String>> =
        std::env::var("CDIL_ACCEPT").ok().map(|s| s.split(',').map(|t| t.trim().to_string()).collect());
    let long = std::env::var("CDIL_ACCEPT_LONG").is_ok_and(|v| v == "1");
    let mut criteria: Vec<Criterion> = vec![
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
        ("7", criterion_7),
        ("8", criterion_8),
        ("9", criterion_9),
        ("10", criterion_10),
    ];
    if long {
        criteria.insert(6, ("6-long", criterion_6_long));
    }
    let mut failures = 0;
    for (id, run) in criteria {
        if selected.as_ref().is_some_and(|s| !s.iter().any(|t| t == id)) {
            continue;
        }
        match run() {
            Ok(detail) => println!("[PASS] criterion {id}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] criterion {id}: {detail}");
            }
        }
    }
    if !long {
        println!("[SKIP] criterion 6-long: N=2048 run disabled (set CDIL_ACCEPT_LONG=1)");
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
