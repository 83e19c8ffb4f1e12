//! Stacks of residual dilated-convolution blocks with a classifier readout,
//! plus the depth, dilation, receptive-field and parameter-count rules for
//! each variant.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{
    ensemble_readout, ensemble_readout_backward, Activation, BlockCache, ConvLayer, LinearHead,
    PaddingMode, ResidualBlock,
};
use crate::tensor::{Matrix, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Circular padding, exponential dilations, ensemble readout.
    Cdil,
    /// Zero padding, exponential dilations, ensemble readout.
    Dil,
    /// Zero padding, dilation 1, ensemble readout.
    Cnn,
    /// Causal zero padding, exponential dilations, last-position readout.
    Tcn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    Ensemble,
    LastPosition,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Cdil, Variant::Dil, Variant::Cnn, Variant::Tcn];

    pub fn padding(self) -> PaddingMode {
        match self {
            Variant::Cdil => PaddingMode::Circular,
            Variant::Dil | Variant::Cnn => PaddingMode::Zero,
            Variant::Tcn => PaddingMode::CausalZero,
        }
    }

    pub fn readout(self) -> Readout {
        match self {
            Variant::Tcn => Readout::LastPosition,
            _ => Readout::Ensemble,
        }
    }

    pub fn dilated(self) -> bool {
        !matches!(self, Variant::Cnn)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cdil => "cdil",
            Variant::Dil => "dil",
            Variant::Cnn => "cnn",
            Variant::Tcn => "tcn",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cdil" | "cdil-cnn" => Ok(Variant::Cdil),
            "dil" => Ok(Variant::Dil),
            "cnn" => Ok(Variant::Cnn),
            "tcn" => Ok(Variant::Tcn),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Dilation of each block, first block first.
pub fn dilation_schedule(variant: Variant, depth: usize) -> Result<Vec<usize>> {
    if depth == 0 {
        return Err(Error::Config("depth must be at least 1".into()));
    }
    if depth >= usize::BITS as usize {
        return Err(Error::Config(format!("depth {depth} overflows the dilation schedule")));
    }
    Ok((0..depth)
        .map(|l| if variant.dilated() { 1 << l } else { 1 })
        .collect())
}

/// Smallest depth whose exponential schedule spans the sequence:
/// `ceil(log2(N / 2))`, floored at one block.
pub fn depth_for_length(n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::Config(format!("sequence length {n} is below 2")));
    }
    // 2^L >= N/2  <=>  2^(L+1) >= N
    let mut depth = 0;
    while (1usize << (depth + 1)) < n {
        depth += 1;
    }
    Ok(depth.max(1))
}

/// Number of input positions one output position depends on.
///
/// For `Tcn` the window lies entirely at or before the output position.
pub fn receptive_field(variant: Variant, depth: usize, kernel: usize) -> usize {
    let span = kernel.saturating_sub(1);
    if variant.dilated() {
        1 + span * ((1usize << depth) - 1)
    } else {
        1 + span * depth
    }
}

/// How convolution filters are drawn at construction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Init {
    /// `U(-a, a)` with `a = 1 / sqrt(C_in * K)`, zero bias.
    #[default]
    FanIn,
    /// `N(0, std^2)` filters and bias.
    Normal { std: f64 },
}

impl Init {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("fan-in") || s.eq_ignore_ascii_case("uniform") {
            return Ok(Init::FanIn);
        }
        if let Some(rest) = s.strip_prefix("normal:") {
            let std: f64 = rest
                .parse()
                .map_err(|_| Error::Config(format!("bad init std `{rest}`")))?;
            return Ok(Init::Normal { std });
        }
        Err(Error::Config(format!(
            "unknown init `{s}` (expected fan-in or normal:<std>)"
        )))
    }

    fn apply(self, conv: &mut ConvLayer, rng: &mut ChaCha8Rng) {
        match self {
            Init::FanIn => conv.init_uniform(rng),
            Init::Normal { std } => conv.init_normal(rng, std),
        }
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Init::FanIn => f.write_str("fan-in"),
            Init::Normal { std } => write!(f, "normal:{std}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Channels of each input element.
    pub input_dim: usize,
    pub channels: usize,
    pub depth: usize,
    pub kernel: usize,
    pub classes: usize,
    pub seed: u64,
    pub activation: Activation,
    /// Per-channel scale and shift after each convolution.
    pub norm: bool,
    /// Weight normalisation on each block's main convolution.
    pub weight_norm: bool,
    pub init: Init,
}

impl ModelConfig {
    /// Defaults: 32 channels, kernel 3, ReLU, fan-in init, no normalisation,
    /// seed 0.
    pub fn new(variant: Variant, input_dim: usize, depth: usize, classes: usize) -> Self {
        ModelConfig {
            variant,
            input_dim,
            channels: 32,
            depth,
            kernel: 3,
            classes,
            seed: 0,
            activation: Activation::Relu,
            norm: false,
            weight_norm: false,
            init: Init::FanIn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.input_dim == 0 {
            return fail("input_dim must be at least 1".into());
        }
        if self.channels == 0 {
            return fail("channels must be at least 1".into());
        }
        if self.depth == 0 {
            return fail("depth must be at least 1".into());
        }
        if self.kernel.is_multiple_of(2) {
            return fail(format!("kernel must be odd, got {}", self.kernel));
        }
        if self.classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.classes));
        }
        if let Init::Normal { std } = self.init {
            if !(std.is_finite() && std > 0.0) {
                return fail(format!("init std must be positive, got {std}"));
            }
        }
        if self.depth >= 48 {
            return fail(format!("depth {} is unreasonably large", self.depth));
        }
        Ok(())
    }
}

/// Analytic parameter count for `config`.
pub fn param_count(config: &ModelConfig) -> usize {
    let (d, c, k) = (config.input_dim, config.channels, config.kernel);
    let norm = if config.norm { 2 * c } else { 0 } + if config.weight_norm { c } else { 0 };
    let first = d * c * k + c + norm + if d != c { d * c + c } else { 0 };
    let rest = (config.depth - 1) * (c * c * k + c + norm);
    first + rest + c * config.classes + config.classes
}

/// A warning when the largest dilation exceeds half the sequence length.
pub fn depth_warning(config: &ModelConfig, length: usize) -> Option<String> {
    if !config.variant.dilated() {
        return None;
    }
    let max_dilation = 1usize << (config.depth - 1);
    (2 * max_dilation > length).then(|| {
        format!(
            "depth {} gives dilation {max_dilation} > N/2 = {}; taps wrap past the sequence",
            config.depth,
            length / 2
        )
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub blocks: Vec<ResidualBlock>,
    pub head: LinearHead,
}

/// Per-block activations recorded by [`Model::forward_cached`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    features: Option<Tensor3>,
}

impl ForwardCache {
    pub fn is_empty(&self) -> bool {
        self.features.is_none()
    }

    pub fn blocks(&self) -> &[BlockCache] {
        &self.blocks
    }

    /// Output of the last block.
    pub fn features(&self) -> Option<&Tensor3> {
        self.features.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Matrix,
    /// Last block output, when requested.
    pub features: Option<Tensor3>,
}

/// Gradients for every parameter array, in [`Model::params`] order, plus the
/// gradient with respect to the input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Vec<f64>>,
    pub input: Tensor3,
}

pub fn build_model(config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dilations = dilation_schedule(config.variant, config.depth)?;
    let mut blocks = Vec::with_capacity(config.depth);
    for (l, &d) in dilations.iter().enumerate() {
        let in_channels = if l == 0 { config.input_dim } else { config.channels };
        let mut conv = ConvLayer::new(
            in_channels,
            config.channels,
            config.kernel,
            d,
            config.variant.padding(),
        )?;
        config.init.apply(&mut conv, &mut rng);
        if config.weight_norm {
            conv.enable_weight_norm();
        }
        let mut block = ResidualBlock::new(conv, config.activation, config.norm)?;
        if let Some(p) = &mut block.projection {
            config.init.apply(p, &mut rng);
        }
        blocks.push(block);
    }
    let mut head = LinearHead::new(config.channels, config.classes)?;
    head.init_uniform(&mut rng);
    Ok(Model {
        config: config.clone(),
        blocks,
        head,
    })
}

impl Model {
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.blocks.iter().flat_map(|b| b.params()).collect();
        out.push(&self.head.weights);
        out.push(&self.head.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .blocks
            .iter_mut()
            .flat_map(|b| b.params_mut())
            .collect();
        out.push(&mut self.head.weights);
        out.push(&mut self.head.bias);
        out
    }

    /// Parameters actually held by the model, counted at runtime.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        if x.channels() != self.config.input_dim {
            return Err(Error::ChannelMismatch {
                expected: self.config.input_dim,
                actual: x.channels(),
            });
        }
        Ok(())
    }

    fn readout(&self, features: &Tensor3) -> Result<Matrix> {
        match self.config.variant.readout() {
            Readout::Ensemble => ensemble_readout(features, &self.head),
            Readout::LastPosition => self.head.forward(&last_position(features)),
        }
    }

    pub fn forward(&self, x: &Tensor3, keep_features: bool) -> Result<ForwardOutput> {
        self.check_input(x)?;
        let mut h = x.clone();
        for block in &self.blocks {
            h = block.forward(&h)?;
        }
        let logits = self.readout(&h)?;
        Ok(ForwardOutput {
            logits,
            features: keep_features.then_some(h),
        })
    }

    /// Forward pass that records what [`Model::backward`] needs.
    pub fn forward_cached(&self, x: &Tensor3, cache: &mut ForwardCache) -> Result<Matrix> {
        self.check_input(x)?;
        cache.blocks.clear();
        cache.features = None;
        let mut h = x.clone();
        for block in &self.blocks {
            let (out, block_cache) = block.forward_cached(&h)?;
            cache.blocks.push(block_cache);
            h = out;
        }
        let logits = self.readout(&h)?;
        cache.features = Some(h);
        Ok(logits)
    }

    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Matrix) -> Result<Gradients> {
        let features = cache.features.as_ref().ok_or(Error::MissingCache)?;
        if cache.blocks.len() != self.blocks.len() {
            return Err(Error::MissingCache);
        }
        let (head_w, head_b, mut grad) = match self.config.variant.readout() {
            Readout::Ensemble => ensemble_readout_backward(grad_logits, features, &self.head)?,
            Readout::LastPosition => {
                let g = self.head.backward(grad_logits, &last_position(features))?;
                let n = features.length();
                let mut gf = Tensor3::zeros(features.shape())?;
                for b in 0..features.batch() {
                    for c in 0..features.channels() {
                        gf.set(b, c, n - 1, g.grad_input.get(b, c));
                    }
                }
                (g.grad_weights, g.grad_bias, gf)
            }
        };
        let mut per_block = Vec::with_capacity(self.blocks.len());
        for (block, block_cache) in self.blocks.iter().zip(&cache.blocks).rev() {
            let g = block.backward(&grad, block_cache)?;
            grad = g.grad_input;
            per_block.push(g.params);
        }
        let mut params: Vec<Vec<f64>> = per_block.into_iter().rev().flatten().collect();
        params.push(head_w);
        params.push(head_b);
        Ok(Gradients {
            params,
            input: grad,
        })
    }
}

fn last_position(features: &Tensor3) -> Matrix {
    let n = features.length();
    let values = features
        .values()
        .chunks_exact(n)
        .map(|row| row[n - 1])
        .collect();
    Matrix::from_vec(features.batch(), features.channels(), values).expect("row count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::Rng;

    fn random_input(rng: &mut ChaCha8Rng, b: usize, d: usize, n: usize) -> Tensor3 {
        let v = (0..b * d * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor3::from_vec(Shape::new(b, d, n).unwrap(), v).unwrap()
    }

    #[test]
    fn dilation_schedules() {
        assert_eq!(dilation_schedule(Variant::Cdil, 3).unwrap(), vec![1, 2, 4]);
        assert_eq!(dilation_schedule(Variant::Cnn, 4).unwrap(), vec![1, 1, 1, 1]);
        assert_eq!(dilation_schedule(Variant::Cdil, 1).unwrap(), vec![1]);
        assert_eq!(dilation_schedule(Variant::Tcn, 2).unwrap(), vec![1, 2]);
        assert!(dilation_schedule(Variant::Dil, 0).is_err());
    }

    #[test]
    fn depth_rule() {
        assert_eq!(depth_for_length(1024).unwrap(), 9);
        assert_eq!(depth_for_length(4000).unwrap(), 11);
        assert_eq!(depth_for_length(5000).unwrap(), 12);
        assert_eq!(depth_for_length(3750).unwrap(), 11);
        for n in 2..=16 {
            assert_eq!(depth_for_length(1 << n).unwrap(), n - 1);
        }
        assert!(depth_for_length(1).is_err());
    }

    #[test]
    fn largest_dilation_fits_half_length() {
        for n in 2..3000 {
            let depth = depth_for_length(n).unwrap();
            assert!(2 * (1usize << (depth - 1)) <= n, "n={n}");
        }
    }

    #[test]
    fn receptive_fields() {
        assert_eq!(receptive_field(Variant::Cdil, 1, 3), 3);
        assert_eq!(receptive_field(Variant::Cdil, 3, 3), 15);
        assert_eq!(receptive_field(Variant::Cnn, 3, 3), 7);
        assert_eq!(receptive_field(Variant::Tcn, 3, 3), 15);
    }

    #[test]
    fn param_count_formula() {
        let cfg = ModelConfig::new(Variant::Cdil, 2, 3, 2);
        assert_eq!(param_count(&cfg), 6594);
        let model = build_model(&cfg).unwrap();
        assert_eq!(model.blocks.len(), 3);
        assert_eq!((model.head.in_features, model.head.out_features), (32, 2));
        assert_eq!(model.param_count(), 6594);

        let mut one = ModelConfig::new(Variant::Dil, 8, 1, 2);
        one.channels = 8;
        assert_eq!(param_count(&one), 8 * 8 * 3 + 8 + 8 * 2 + 2);

        let mut deeper = cfg.clone();
        deeper.depth = 4;
        assert_eq!(param_count(&deeper) - param_count(&cfg), 32 * 32 * 3 + 32);

        let mut normed = cfg.clone();
        normed.norm = true;
        assert_eq!(build_model(&normed).unwrap().param_count(), param_count(&normed));
    }

    #[test]
    fn only_first_block_projects() {
        let model = build_model(&ModelConfig::new(Variant::Tcn, 2, 4, 2)).unwrap();
        assert!(model.blocks[0].projection.is_some());
        assert!(model.blocks[1..].iter().all(|b| b.projection.is_none()));
        let dil: Vec<usize> = model.blocks.iter().map(|b| b.conv.dilation).collect();
        assert_eq!(dil, vec![1, 2, 4, 8]);
    }

    #[test]
    fn same_seed_same_parameters() {
        let mut cfg = ModelConfig::new(Variant::Cdil, 2, 3, 2);
        cfg.seed = 99;
        assert_eq!(build_model(&cfg).unwrap(), build_model(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seed = 100;
        assert_ne!(build_model(&cfg).unwrap(), build_model(&other).unwrap());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ModelConfig::new(Variant::Cdil, 2, 3, 2);
        cfg.kernel = 4;
        assert!(build_model(&cfg).is_err());
        let cfg = ModelConfig::new(Variant::Cdil, 2, 0, 2);
        assert!(build_model(&cfg).is_err());
        let cfg = ModelConfig::new(Variant::Cdil, 2, 3, 1);
        assert!(build_model(&cfg).is_err());
    }

    #[test]
    fn dead_network_outputs_head_bias() {
        let mut model = build_model(&ModelConfig::new(Variant::Dil, 2, 2, 3)).unwrap();
        for p in model.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        model.head.bias = vec![0.5, -1.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = model.forward(&random_input(&mut rng, 3, 2, 8), false).unwrap();
        for r in 0..3 {
            assert_eq!(out.logits.row(r), &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let model = build_model(&ModelConfig::new(Variant::Cdil, 2, 2, 2)).unwrap();
        let err = model.backward(&ForwardCache::default(), &Matrix::zeros(1, 2));
        assert!(matches!(err, Err(Error::MissingCache)));
    }

    #[test]
    fn zero_logit_gradient_gives_zero_gradients() {
        let model = build_model(&ModelConfig::new(Variant::Cdil, 2, 2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_input(&mut rng, 2, 2, 8);
        let mut cache = ForwardCache::default();
        model.forward_cached(&x, &mut cache).unwrap();
        let g = model.backward(&cache, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.params.iter().flatten().all(|&v| v == 0.0));
        assert!(g.input.values().iter().all(|&v| v == 0.0));
        assert_eq!(g.params.len(), model.params().len());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let model = build_model(&ModelConfig::new(Variant::Cdil, 2, 2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(model.forward(&random_input(&mut rng, 1, 3, 8), false).is_err());
    }

    #[test]
    fn depth_warning_when_dilation_exceeds_half_length() {
        let cfg = ModelConfig::new(Variant::Cdil, 2, 5, 2);
        assert!(depth_warning(&cfg, 32).is_none());
        assert!(depth_warning(&cfg, 16).is_some());
        let cnn = ModelConfig::new(Variant::Cnn, 2, 5, 2);
        assert!(depth_warning(&cnn, 4).is_none());
    }
}
