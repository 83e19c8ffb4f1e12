//! Central finite-difference checks of every analytic gradient in the crate.
//!
//! Each check perturbs one coordinate at a time by `+-step` and compares
//! `(f(p + h) - f(p - h)) / 2h` against the backward pass. Coordinates whose
//! perturbation flips the sign of any ReLU input are skipped, since the
//! difference quotient straddles a kink there.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{build_model, ForwardCache, Init, ModelConfig, Variant};
use crate::nn::{
    ensemble_readout, ensemble_readout_backward, Activation, ChannelAffine, ConvLayer,
    LinearHead, PaddingMode, ResidualBlock,
};
use crate::rng::{derive_seed, seeded};
use crate::tensor::{Matrix, Shape, Tensor3};
use crate::train::softmax_cross_entropy;

/// Gradients smaller than this are compared in absolute terms.
pub const ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Test hook: perturb the analytic gradients before comparing.
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            seed: 0,
            step: 1e-5,
            tolerance: 1e-5,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a ReLU kink was crossed.
    pub skipped: usize,
}

impl LayerCheck {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance && self.checked > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub checks: Vec<LayerCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed(self.tolerance))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

type Eval<'a> = dyn Fn(&[Vec<f64>]) -> Result<(f64, Vec<bool>)> + 'a;

fn check_case(
    name: impl Into<String>,
    point: Vec<Vec<f64>>,
    mut analytic: Vec<Vec<f64>>,
    eval: &Eval<'_>,
    opts: &GradcheckOptions,
) -> Result<LayerCheck> {
    assert_eq!(point.len(), analytic.len(), "one gradient per array");
    if opts.corrupt {
        for g in analytic.iter_mut().flatten() {
            *g = *g * (1.0 + 1e-3) + 1e-3;
        }
    }
    let (_, base_kinks) = eval(&point)?;
    let h = opts.step;
    let mut out = LayerCheck {
        name: name.into(),
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut probe = point.clone();
    for a in 0..point.len() {
        for j in 0..point[a].len() {
            probe[a][j] = point[a][j] + h;
            let (fp, kp) = eval(&probe)?;
            probe[a][j] = point[a][j] - h;
            let (fm, km) = eval(&probe)?;
            probe[a][j] = point[a][j];
            if kp != base_kinks || km != base_kinks {
                out.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            out.max_rel_error = out.max_rel_error.max(relative_error(analytic[a][j], numeric));
            out.checked += 1;
        }
    }
    Ok(out)
}

fn uniform(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn tensor(shape: Shape, values: &[f64]) -> Result<Tensor3> {
    Tensor3::from_vec(shape, values.to_vec())
}

fn signs(x: &Tensor3) -> Vec<bool> {
    x.values().iter().map(|&v| v > 0.0).collect()
}

fn random_conv(
    rng: &mut ChaCha8Rng,
    cin: usize,
    cout: usize,
    kernel: usize,
    dilation: usize,
    padding: PaddingMode,
) -> Result<ConvLayer> {
    let mut conv = ConvLayer::new(cin, cout, kernel, dilation, padding)?;
    conv.weights = uniform(rng, conv.weights.len());
    conv.bias = uniform(rng, conv.bias.len());
    Ok(conv)
}

fn mode_name(mode: PaddingMode) -> &'static str {
    match mode {
        PaddingMode::Circular => "circular",
        PaddingMode::Zero => "zero",
        PaddingMode::CausalZero => "causal",
    }
}

const MODES: [PaddingMode; 3] = [PaddingMode::Circular, PaddingMode::Zero, PaddingMode::CausalZero];

fn conv_checks(rng: &mut ChaCha8Rng, opts: &GradcheckOptions, out: &mut Vec<LayerCheck>) -> Result<()> {
    let shape = Shape::new(2, 3, 8)?;
    let mut cases = Vec::new();
    for mode in MODES {
        for (kernel, dilation) in [(3, 1), (3, 3), (5, 2)] {
            cases.push((mode, kernel, dilation, false));
        }
    }
    cases.push((PaddingMode::Circular, 3, 2, true));
    for (mode, kernel, dilation, weight_norm) in cases {
        let mut layer = random_conv(rng, 3, 4, kernel, dilation, mode)?;
        if weight_norm {
            layer.enable_weight_norm();
            for g in layer.gain.iter_mut().flatten() {
                *g *= rng.random_range(0.5..2.0);
            }
        }
        let x = uniform(rng, shape.numel());
        let out_shape = Shape::new(2, 4, 8)?;
        let r = tensor(out_shape, &uniform(rng, out_shape.numel()))?;
        let mut point = vec![layer.weights.clone(), layer.bias.clone()];
        point.extend(layer.gain.clone());
        point.push(x.clone());
        let grads = layer.backward(&r, &tensor(shape, &x)?)?;
        let mut analytic = vec![grads.grad_weights, grads.grad_bias];
        analytic.extend(grads.grad_gain);
        analytic.push(grads.grad_input.into_values());
        let eval = |p: &[Vec<f64>]| -> Result<(f64, Vec<bool>)> {
            let mut l = layer.clone();
            l.weights.clone_from(&p[0]);
            l.bias.clone_from(&p[1]);
            if let Some(g) = &mut l.gain {
                g.clone_from(&p[2]);
            }
            let y = l.forward(&tensor(shape, p.last().expect("input"))?)?;
            Ok((y.dot(&r), Vec::new()))
        };
        let name = format!(
            "conv {} k={kernel} d={dilation}{}",
            mode_name(mode),
            if weight_norm { " weight-norm" } else { "" }
        );
        out.push(check_case(name, point, analytic, &eval, opts)?);
    }
    Ok(())
}

fn pointwise_checks(rng: &mut ChaCha8Rng, opts: &GradcheckOptions, out: &mut Vec<LayerCheck>) -> Result<()> {
    let shape = Shape::new(2, 3, 8)?;
    let r = tensor(shape, &uniform(rng, shape.numel()))?;

    let x = uniform(rng, shape.numel());
    let g = Activation::Relu.backward(&r, &tensor(shape, &x)?)?;
    let eval = |p: &[Vec<f64>]| -> Result<(f64, Vec<bool>)> {
        let x = tensor(shape, &p[0])?;
        Ok((Activation::Relu.forward(&x).dot(&r), signs(&x)))
    };
    out.push(check_case("relu", vec![x], vec![g.into_values()], &eval, opts)?);

    let norm = ChannelAffine {
        scale: uniform(rng, 3),
        shift: uniform(rng, 3),
    };
    let x = uniform(rng, shape.numel());
    let (gs, gb, gi) = norm.backward(&r, &tensor(shape, &x)?)?;
    let eval = |p: &[Vec<f64>]| -> Result<(f64, Vec<bool>)> {
        let n = ChannelAffine {
            scale: p[0].clone(),
            shift: p[1].clone(),
        };
        Ok((n.forward(&tensor(shape, &p[2])?)?.dot(&r), Vec::new()))
    };
    let point = vec![norm.scale.clone(), norm.shift.clone(), x];
    out.push(check_case("channel affine", point, vec![gs, gb, gi.into_values()], &eval, opts)?);
    Ok(())
}

fn head_checks(rng: &mut ChaCha8Rng, opts: &GradcheckOptions, out: &mut Vec<LayerCheck>) -> Result<()> {
    let (batch, width, classes, n) = (3, 4, 5, 6);
    let mut head = LinearHead::new(width, classes)?;
    head.weights = uniform(rng, head.weights.len());
    head.bias = uniform(rng, classes);
    let r = Matrix::from_vec(batch, classes, uniform(rng, batch * classes))?;
    let dot = |m: &Matrix| m.values().iter().zip(r.values()).map(|(a, b)| a * b).sum::<f64>();
    let with = |p: &[Vec<f64>]| {
        let mut h = head.clone();
        h.weights.clone_from(&p[0]);
        h.bias.clone_from(&p[1]);
        h
    };

    let x = uniform(rng, batch * width);
    let g = head.backward(&r, &Matrix::from_vec(batch, width, x.clone())?)?;
    let eval = |p: &[Vec<f64>]| -> Result<(f64, Vec<bool>)> {
        let logits = with(p).forward(&Matrix::from_vec(batch, width, p[2].clone())?)?;
        Ok((dot(&logits), Vec::new()))
    };
    let point = vec![head.weights.clone(), head.bias.clone(), x];
    let analytic = vec![g.grad_weights, g.grad_bias, g.grad_input.values().to_vec()];
    out.push(check_case("linear head", point, analytic, &eval, opts)?);

    let shape = Shape::new(batch, width, n)?;
    let f = uniform(rng, shape.numel());
    let (gw, gb, gf) = ensemble_readout_backward(&r, &tensor(shape, &f)?, &head)?;
    let eval = |p: &[Vec<f64>]| -> Result<(f64, Vec<bool>)> {
        let logits = ensemble_readout(&tensor(shape, &p[2])?, &with(p))?;
        Ok((dot(&logits), Vec::new()))
    };
    let point = vec![head.weights.clone(), head.bias.clone(), f];
    out.push(check_case("ensemble readout", point, vec![gw, gb, gf.into_values()], &eval, opts)?);

    let logits = uniform(rng, batch * classes).iter().map(|v| 3.0 * v).collect::<Vec<_>>();
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let (_, grad) = softmax_cross_entropy(&Matrix::from_vec(batch, classes, logits.clone())?, &labels)?;
    let eval = |p: &[Vec<f64>]| -> Result<(f64, Vec<bool>)> {
        let (loss, _) = softmax_cross_entropy(&Matrix::from_vec(batch, classes, p[0].clone())?, &labels)?;
        Ok((loss, Vec::new()))
    };
    out.push(check_case("softmax cross-entropy", vec![logits], vec![grad.values().to_vec()], &eval, opts)?);
    Ok(())
}

fn block_checks(rng: &mut ChaCha8Rng, opts: &GradcheckOptions, out: &mut Vec<LayerCheck>) -> Result<()> {
    let cases = [
        (PaddingMode::Circular, 3, false, false),
        (PaddingMode::Circular, 2, true, true),
        (PaddingMode::Zero, 2, false, false),
        (PaddingMode::Zero, 3, true, false),
        (PaddingMode::CausalZero, 2, false, true),
        (PaddingMode::CausalZero, 3, false, false),
    ];
    for (mode, cin, norm, weight_norm) in cases {
        let cout = 3;
        let mut conv = random_conv(rng, cin, cout, 3, 2, mode)?;
        if weight_norm {
            conv.enable_weight_norm();
        }
        let mut block = ResidualBlock::new(conv, Activation::Relu, norm)?;
        for p in block.params_mut() {
            for v in p.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let in_shape = Shape::new(2, cin, 8)?;
        let out_shape = Shape::new(2, cout, 8)?;
        let x = uniform(rng, in_shape.numel());
        let r = tensor(out_shape, &uniform(rng, out_shape.numel()))?;
        let (_, cache) = block.forward_cached(&tensor(in_shape, &x)?)?;
        let grads = block.backward(&r, &cache)?;
        let mut point: Vec<Vec<f64>> = block.params().iter().map(|p| p.to_vec()).collect();
        point.push(x);
        let mut analytic = grads.params;
        analytic.push(grads.grad_input.into_values());
        let eval = |p: &[Vec<f64>]| -> Result<(f64, Vec<bool>)> {
            let mut b = block.clone();
            for (dst, src) in b.params_mut().into_iter().zip(p) {
                dst.copy_from_slice(src);
            }
            let (y, cache) = b.forward_cached(&tensor(in_shape, p.last().expect("input"))?)?;
            Ok((y.dot(&r), signs(cache.pre_activation())))
        };
        let mut name = format!("residual {}", mode_name(mode));
        if cin != cout {
            name.push_str(" projection");
        }
        if norm {
            name.push_str(" affine");
        }
        if weight_norm {
            name.push_str(" weight-norm");
        }
        out.push(check_case(name, point, analytic, &eval, opts)?);
    }
    Ok(())
}

fn model_checks(rng: &mut ChaCha8Rng, opts: &GradcheckOptions, out: &mut Vec<LayerCheck>) -> Result<()> {
    let (batch, input_dim, n, classes) = (3, 2, 16, 3);
    for variant in Variant::ALL {
        for extras in [false, true] {
            let mut config = ModelConfig::new(variant, input_dim, 3, classes);
            config.channels = 4;
            config.seed = rng.random();
            if extras {
                config.norm = true;
                config.weight_norm = true;
                config.init = Init::Normal { std: 0.5 };
            }
            let mut model = build_model(&config)?;
            for p in model.params_mut() {
                for v in p.iter_mut() {
                    *v += rng.random_range(-0.1..0.1);
                }
            }
            let shape = Shape::new(batch, input_dim, n)?;
            let x = uniform(rng, shape.numel());
            let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
            let mut cache = ForwardCache::default();
            let logits = model.forward_cached(&tensor(shape, &x)?, &mut cache)?;
            let (_, grad_logits) = softmax_cross_entropy(&logits, &labels)?;
            let grads = model.backward(&cache, &grad_logits)?;
            let mut point: Vec<Vec<f64>> = model.params().iter().map(|p| p.to_vec()).collect();
            point.push(x);
            let mut analytic = grads.params;
            analytic.push(grads.input.into_values());
            let eval = |p: &[Vec<f64>]| -> Result<(f64, Vec<bool>)> {
                let mut m = model.clone();
                for (dst, src) in m.params_mut().into_iter().zip(p) {
                    dst.copy_from_slice(src);
                }
                let mut cache = ForwardCache::default();
                let logits = m.forward_cached(&tensor(shape, p.last().expect("input"))?, &mut cache)?;
                let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
                let kinks = cache.blocks().iter().flat_map(|b| signs(b.pre_activation())).collect();
                Ok((loss, kinks))
            };
            let name = format!("model {variant}{}", if extras { " affine weight-norm" } else { "" });
            out.push(check_case(name, point, analytic, &eval, opts)?);
        }
    }
    Ok(())
}

/// Runs every layer-level and model-level check.
pub fn gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut checks = Vec::new();
    let stream = |tag| seeded(derive_seed(opts.seed, tag));
    conv_checks(&mut stream(1), opts, &mut checks)?;
    pointwise_checks(&mut stream(2), opts, &mut checks)?;
    head_checks(&mut stream(3), opts, &mut checks)?;
    block_checks(&mut stream(4), opts, &mut checks)?;
    model_checks(&mut stream(5), opts, &mut checks)?;
    Ok(GradcheckReport {
        tolerance: opts.tolerance,
        checks,
    })
}
