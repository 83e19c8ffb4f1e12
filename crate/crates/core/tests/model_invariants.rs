use cdil::model::{build_model, param_count, ModelConfig, Variant};
use cdil::nn::{ConvLayer, PaddingMode};
use cdil::tensor::{Shape, Tensor3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, b: usize, c: usize, n: usize) -> Tensor3 {
    let v = (0..b * c * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor3::from_vec(Shape::new(b, c, n).unwrap(), v).unwrap()
}

fn random_model(variant: Variant, seed: u64, input_dim: usize, depth: usize) -> cdil::Model {
    let mut cfg = ModelConfig::new(variant, input_dim, depth, 3);
    cfg.channels = 5;
    cfg.seed = seed;
    let mut model = build_model(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for p in model.params_mut() {
        for v in p.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    model
}

/// Direct evaluation of `out[o][t] = b[o] + sum_i sum_k w[o][i][k] x[i][t + offset(k)]`.
fn interpret(layer: &ConvLayer, x: &Tensor3) -> Tensor3 {
    let (batch, _, n) = x.shape().dims();
    let k_len = layer.kernel as isize;
    let d = layer.dilation as isize;
    let mut out = Tensor3::zeros(Shape::new(batch, layer.out_channels, n).unwrap()).unwrap();
    for b in 0..batch {
        for o in 0..layer.out_channels {
            for t in 0..n as isize {
                let mut acc = layer.bias[o];
                for i in 0..layer.in_channels {
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
                        acc += layer.weight(o, i, k as usize) * value;
                    }
                }
                out.set(b, o, t as usize, acc);
            }
        }
    }
    out
}

fn random_conv(rng: &mut ChaCha8Rng, mode: PaddingMode) -> ConvLayer {
    let cin = rng.random_range(1..4);
    let cout = rng.random_range(1..4);
    let kernel = [1, 3, 5][rng.random_range(0..3)];
    let dilation = rng.random_range(1..6);
    let mut layer = ConvLayer::new(cin, cout, kernel, dilation, mode).unwrap();
    layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    layer.bias.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    layer
}

#[test]
fn conv_kernel_matches_interpreter_in_every_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for case in 0..300 {
        let mode = [PaddingMode::Circular, PaddingMode::Zero, PaddingMode::CausalZero][case % 3];
        let layer = random_conv(&mut rng, mode);
        let n = rng.random_range(1..20);
        let x = random_tensor(&mut rng, 2, layer.in_channels, n);
        let fast = layer.forward(&x).unwrap();
        let slow = interpret(&layer, &x);
        for (a, b) in fast.values().iter().zip(slow.values()) {
            assert!((a - b).abs() < 1e-10, "case {case} {mode:?}");
        }
    }
}

#[test]
fn circular_equals_wrap_extend_zero_pad_crop() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..100 {
        let circ = random_conv(&mut rng, PaddingMode::Circular);
        let mut zero = circ.clone();
        zero.padding = PaddingMode::Zero;
        let n = rng.random_range(1..20);
        let x = random_tensor(&mut rng, 1, circ.in_channels, n);
        let pad = (circ.kernel - 1) / 2 * circ.dilation;
        let wide = n + 2 * pad;
        let mut ext = Tensor3::zeros(Shape::new(1, circ.in_channels, wide).unwrap()).unwrap();
        for c in 0..circ.in_channels {
            for j in 0..wide {
                let src = (j as isize - pad as isize).rem_euclid(n as isize) as usize;
                ext.set(0, c, j, x.get(0, c, src));
            }
        }
        let a = circ.forward(&x).unwrap();
        let b = zero.forward(&ext).unwrap();
        for o in 0..circ.out_channels {
            for t in 0..n {
                assert_eq!(a.get(0, o, t), b.get(0, o, t + pad));
            }
        }
    }
}

#[test]
fn conv_adjoint_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for case in 0..60 {
        let mode = [PaddingMode::Circular, PaddingMode::Zero, PaddingMode::CausalZero][case % 3];
        let mut layer = random_conv(&mut rng, mode);
        layer.bias.iter_mut().for_each(|b| *b = 0.0);
        let n = rng.random_range(1..16);
        let x = random_tensor(&mut rng, 2, layer.in_channels, n);
        let g = random_tensor(&mut rng, 2, layer.out_channels, n);
        let lhs = layer.forward(&x).unwrap().dot(&g);
        let rhs = x.dot(&layer.backward(&g, &x).unwrap().grad_input);
        assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn cdil_logits_are_rotation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for seed in 0..10 {
        let model = random_model(Variant::Cdil, seed, 2, 3);
        let x = random_tensor(&mut rng, 2, 2, 12);
        let base = model.forward(&x, false).unwrap().logits;
        for s in -13..13 {
            let rot = model.forward(&x.rotate(s), false).unwrap().logits;
            for (a, b) in base.values().iter().zip(rot.values()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn zero_padded_models_see_position() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for variant in [Variant::Dil, Variant::Cnn, Variant::Tcn] {
        let model = random_model(variant, 7, 2, 3);
        let x = random_tensor(&mut rng, 1, 2, 12);
        let a = model.forward(&x, false).unwrap().logits;
        let b = model.forward(&x.rotate(5), false).unwrap().logits;
        let gap = a.values().iter().zip(b.values()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(gap > 1e-3, "{variant}: {gap}");
    }
}

#[test]
fn tcn_features_are_causal() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let model = random_model(Variant::Tcn, 3, 2, 3);
    let n = 16;
    let x = random_tensor(&mut rng, 1, 2, n);
    let base = model.forward(&x, true).unwrap().features.unwrap();
    for t in 0..n - 1 {
        let mut y = x.clone();
        for c in 0..2 {
            for s in t + 1..n {
                y.set(0, c, s, rng.random_range(-5.0..5.0));
            }
        }
        let f = model.forward(&y, true).unwrap().features.unwrap();
        for c in 0..f.channels() {
            for s in 0..=t {
                assert_eq!(f.get(0, c, s), base.get(0, c, s), "t={t} s={s}");
            }
        }
    }
}

#[test]
fn tcn_logits_depend_on_last_position_features_only() {
    let model = random_model(Variant::Tcn, 9, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let x = random_tensor(&mut rng, 1, 2, 10);
    let out = model.forward(&x, true).unwrap();
    let f = out.features.unwrap();
    let last: Vec<f64> = (0..f.channels()).map(|c| f.get(0, c, 9)).collect();
    for k in 0..3 {
        let mut z = model.head.bias[k];
        for (c, v) in last.iter().enumerate() {
            z += model.head.weights[k * f.channels() + c] * v;
        }
        assert!((z - out.logits.get(0, k)).abs() < 1e-12);
    }
}

#[test]
fn weight_norm_param_counts_for_xor_models() {
    // Thousands of parameters at D=2, C=32, depth 3 ..= 10.
    let known = [6.69, 9.83, 12.96, 16.10, 19.23, 22.37, 25.51, 28.64];
    for (i, expected) in known.iter().enumerate() {
        let depth = i + 3;
        let mut cfg = ModelConfig::new(Variant::Cdil, 2, depth, 2);
        cfg.weight_norm = true;
        let count = build_model(&cfg).unwrap().param_count();
        assert_eq!(count, param_count(&cfg));
        assert_eq!((count as f64 / 10.0).round() / 100.0, *expected, "depth {depth}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn runtime_param_count_matches_formula(
        variant in prop::sample::select(Variant::ALL.to_vec()),
        input_dim in 1usize..4,
        channels in 1usize..6,
        depth in 1usize..5,
        kernel in prop::sample::select(vec![1usize, 3, 5]),
        classes in 2usize..5,
        norm in any::<bool>(),
        weight_norm in any::<bool>(),
    ) {
        let mut cfg = ModelConfig::new(variant, input_dim, depth, classes);
        cfg.channels = channels;
        cfg.kernel = kernel;
        cfg.norm = norm;
        cfg.weight_norm = weight_norm;
        let model = build_model(&cfg).unwrap();
        prop_assert_eq!(model.param_count(), param_count(&cfg));
    }

    #[test]
    fn cdil_equivariant_features_under_rotation(seed in 0u64..1000, shift in -40isize..40) {
        let model = random_model(Variant::Cdil, seed, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, 1, 1, 9);
        let a = model.forward(&x, true).unwrap().features.unwrap().rotate(shift);
        let b = model.forward(&x.rotate(shift), true).unwrap().features.unwrap();
        for (p, q) in a.values().iter().zip(b.values()) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }
}
