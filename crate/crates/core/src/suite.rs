//! Verification suites: layer descriptions, seeded construction, the
//! configuration grid and the checks run on each layer.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::{
    apply_residual, householder_unnormalized, reflection_selectors, Activation, ResidualKind,
    SOFT_HUBER_DELTA,
};
use crate::conv::{apply, conv2d_forward, ConvSpec, PaddingMode};
use crate::error::{param_err, Result};
use crate::orthoconv::{
    aoc_kernel, aol_rescale, random_kernel, relu, soc_explicit_kernel, AocParams, Contract,
    ConvLayerConfig, FreeParams, FusedSllAoc, SandwichLayer, SandwichParams, SllLayer, SllParams,
    SocParams,
};
use crate::tensor::{FeatureMap, Tensor4};
use crate::verify::{
    existence_check, fft_circular_spectrum, gram_bound, jacobian_spectral_check,
    operator_power_iteration, sample_points, toeplitz_svd_spectrum, Existence, Rejection,
    Requirement, SpectrumMethod, SpectrumReport, DEFAULT_TOLERANCE, SOC_TOLERANCE,
};

/// Activation entry of a suite. Householder directions are drawn from the
/// suite seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationSpec {
    Abs,
    SoftHuber {
        #[serde(default = "default_delta")]
        delta: f64,
    },
    #[serde(rename = "maxmin")]
    MaxMin,
    Householder,
    Householder2,
    /// Raw reflection matrix entries `(a, b)` used for every pair, without
    /// normalization.
    HouseholderUnnormalized {
        #[serde(default = "default_raw")]
        raw: [f64; 2],
    },
}

fn default_delta() -> f64 {
    SOFT_HUBER_DELTA
}

fn default_raw() -> [f64; 2] {
    [1.0, 1.0]
}

fn one() -> f64 {
    1.0
}

fn four() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `scale` multiplies the finished kernel (`1` keeps it orthogonal).
    Aoc {
        #[serde(default)]
        config: ConvLayerConfig,
        #[serde(default = "one")]
        scale: f64,
    },
    Soc {
        #[serde(default)]
        config: ConvLayerConfig,
        #[serde(default = "one")]
        scale: f64,
    },
    Aol {
        #[serde(default)]
        config: ConvLayerConfig,
    },
    Sll {
        #[serde(default)]
        config: ConvLayerConfig,
    },
    /// AOC (`c_in → c_in`), SLL, then AOC with the config's stride and width.
    SllAoc {
        #[serde(default)]
        config: ConvLayerConfig,
    },
    Sandwich {
        #[serde(default)]
        config: ConvLayerConfig,
    },
    Activation {
        activation: ActivationSpec,
        #[serde(default = "four")]
        channels: usize,
    },
    /// Residual wrapper around an AOL-rescaled 3×3 convolution followed by
    /// MaxMin (Abs for an odd branch width).
    Residual {
        residual: ResidualKind,
        #[serde(default = "four")]
        channels: usize,
    },
}

impl LayerSpec {
    pub fn name(&self) -> String {
        match self {
            LayerSpec::Aoc { .. } => "aoc".into(),
            LayerSpec::Soc { .. } => "soc".into(),
            LayerSpec::Aol { .. } => "aol".into(),
            LayerSpec::Sll { .. } => "sll".into(),
            LayerSpec::SllAoc { .. } => "sll_aoc".into(),
            LayerSpec::Sandwich { .. } => "sandwich".into(),
            LayerSpec::Activation { activation, .. } => {
                format!("activation:{}", activation_name(activation))
            }
            LayerSpec::Residual { residual, .. } => format!("residual:{}", residual.name()),
        }
    }

    fn config(&self) -> Option<&ConvLayerConfig> {
        match self {
            LayerSpec::Aoc { config, .. }
            | LayerSpec::Soc { config, .. }
            | LayerSpec::Aol { config }
            | LayerSpec::Sll { config }
            | LayerSpec::SllAoc { config }
            | LayerSpec::Sandwich { config } => Some(config),
            _ => None,
        }
    }

    /// Default tolerance of the construction.
    pub fn tolerance(&self) -> f64 {
        match self {
            LayerSpec::Soc { .. } => SOC_TOLERANCE,
            _ => DEFAULT_TOLERANCE,
        }
    }
}

fn activation_name(a: &ActivationSpec) -> &'static str {
    match a {
        ActivationSpec::Abs => "abs",
        ActivationSpec::SoftHuber { .. } => "soft_huber",
        ActivationSpec::MaxMin => "maxmin",
        ActivationSpec::Householder => "householder",
        ActivationSpec::Householder2 => "householder2",
        ActivationSpec::HouseholderUnnormalized { .. } => "householder_unnormalized",
    }
}

/// Input spatial size used when a suite does not give one.
pub const DEFAULT_INPUT: [usize; 2] = [8, 8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSpec {
    pub layers: Vec<LayerSpec>,
    /// Spatial input size `[h, w]`; channels come from each layer.
    pub input_shape: [usize; 2],
    pub seed: u64,
    /// Overrides every layer's default tolerance.
    pub tolerance: Option<f64>,
    pub methods: Vec<SpectrumMethod>,
    pub power_iters: usize,
    pub gram_iters: usize,
    pub jacobian_points: usize,
    /// Random perturbation + rebuild rounds, each checked again.
    pub perturb_rounds: usize,
    pub perturb_scale: f64,
    pub output: Option<String>,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            layers: Vec::new(),
            input_shape: DEFAULT_INPUT,
            seed: 0,
            tolerance: None,
            methods: vec![SpectrumMethod::ToeplitzSvd],
            power_iters: 200,
            gram_iters: 6,
            jacobian_points: 5,
            perturb_rounds: 0,
            perturb_scale: 1e-2,
            output: None,
        }
    }
}

pub type MapFn = Arc<dyn Fn(&FeatureMap) -> Result<FeatureMap> + Send + Sync>;
pub type KinkFn = Arc<dyn Fn(&FeatureMap) -> f64 + Send + Sync>;

/// Map ready to be checked.
#[derive(Clone)]
pub enum BuiltLayer {
    Linear {
        kernel: Tensor4,
        spec: ConvSpec,
        in_shape: [usize; 3],
        requirement: Requirement,
    },
    Nonlinear {
        map: MapFn,
        in_shape: [usize; 3],
        /// Distance from the non-smooth set, for sampling Jacobian points.
        kink: Option<KinkFn>,
    },
}

impl BuiltLayer {
    pub fn in_shape(&self) -> [usize; 3] {
        match self {
            BuiltLayer::Linear { in_shape, .. } | BuiltLayer::Nonlinear { in_shape, .. } => {
                *in_shape
            }
        }
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        match self {
            BuiltLayer::Linear { kernel, spec, .. } => apply(x, kernel, spec),
            BuiltLayer::Nonlinear { map, .. } => map(x),
        }
    }
}

/// Free parameters of one suite layer; [`Layer::build`] projects them onto
/// the constraint.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Layer {
    Aoc {
        cfg: ConvLayerConfig,
        params: AocParams,
        scale: f64,
    },
    Soc {
        cfg: ConvLayerConfig,
        params: SocParams,
        scale: f64,
    },
    Aol {
        cfg: ConvLayerConfig,
        kernel: Tensor4,
    },
    Sll {
        cfg: ConvLayerConfig,
        params: SllParams,
    },
    SllAoc {
        pre_cfg: ConvLayerConfig,
        pre: AocParams,
        sll_cfg: ConvLayerConfig,
        sll: SllParams,
        post_cfg: ConvLayerConfig,
        post: AocParams,
    },
    Sandwich {
        cfg: ConvLayerConfig,
        params: SandwichParams,
    },
    Activation {
        act: Activation,
        raw: Option<[f64; 2]>,
        channels: usize,
    },
    Residual {
        kind: ResidualKind,
        channels: usize,
        kernel: Tensor4,
    },
}

fn circular_same(cfg: &ConvLayerConfig, c_in: usize, c_out: usize) -> ConvLayerConfig {
    ConvLayerConfig {
        c_in,
        c_out,
        stride: 1,
        groups: 1,
        transposed: false,
        contract: Contract::Auto,
        ..*cfg
    }
}

fn residual_branch_width(kind: &ResidualKind, channels: usize) -> usize {
    match kind {
        ResidualKind::Concat => channels / 2,
        _ => channels,
    }
}

impl Layer {
    pub fn random<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> Result<Self> {
        Ok(match spec {
            LayerSpec::Aoc { config, scale } => Layer::Aoc {
                cfg: *config,
                params: AocParams::random(config, rng)?,
                scale: *scale,
            },
            LayerSpec::Soc { config, scale } => Layer::Soc {
                cfg: *config,
                params: SocParams::random(config, rng)?,
                scale: *scale,
            },
            LayerSpec::Aol { config } => {
                config.validate()?;
                let (fin, fout) = config.forward_channels();
                let k = config.kernel_size;
                Layer::Aol {
                    cfg: *config,
                    kernel: random_kernel([fout, fin / config.groups, k, k], rng)?,
                }
            }
            LayerSpec::Sll { config } => Layer::Sll {
                cfg: *config,
                params: SllParams::random(config, rng)?,
            },
            LayerSpec::SllAoc { config } => {
                if config.padding_mode != PaddingMode::Circular
                    || config.transposed
                    || config.groups != 1
                {
                    return param_err(
                        "sll_aoc blocks need circular, ungrouped, non-transposed convolutions",
                    );
                }
                let pre_cfg = circular_same(config, config.c_in, config.c_in);
                let sll_cfg = pre_cfg;
                let post_cfg = ConvLayerConfig {
                    c_in: config.c_in,
                    ..*config
                };
                Layer::SllAoc {
                    pre: AocParams::random(&pre_cfg, rng)?,
                    sll: SllParams::random(&sll_cfg, rng)?,
                    post: AocParams::random(&post_cfg, rng)?,
                    pre_cfg,
                    sll_cfg,
                    post_cfg,
                }
            }
            LayerSpec::Sandwich { config } => Layer::Sandwich {
                cfg: *config,
                params: SandwichParams::random(config, rng)?,
            },
            LayerSpec::Activation {
                activation,
                channels,
            } => {
                let c = *channels;
                let (act, raw) = match activation {
                    ActivationSpec::Abs => (Activation::Abs, None),
                    ActivationSpec::SoftHuber { delta } => (Activation::soft_huber(*delta)?, None),
                    ActivationSpec::MaxMin => (Activation::MaxMin, None),
                    ActivationSpec::Householder => (Activation::random_householder(c, rng), None),
                    ActivationSpec::Householder2 => (Activation::random_householder2(c, rng), None),
                    ActivationSpec::HouseholderUnnormalized { raw } => {
                        (Activation::Abs, Some(*raw))
                    }
                };
                if c == 0 {
                    return param_err("activation needs at least one channel");
                }
                Layer::Activation {
                    act,
                    raw,
                    channels: c,
                }
            }
            LayerSpec::Residual { residual, channels } => {
                let w = residual_branch_width(residual, *channels);
                if w == 0 {
                    return param_err("residual branch has no channels");
                }
                Layer::Residual {
                    kind: *residual,
                    channels: *channels,
                    kernel: random_kernel([w, w, 3, 3], rng)?,
                }
            }
        })
    }

    /// Gaussian step of size `scale` on every free parameter.
    pub fn perturb<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        match self {
            Layer::Aoc { params, .. } => params.perturb(scale, rng),
            Layer::Soc { params, .. } => params.perturb(scale, rng),
            Layer::Aol { kernel, .. } | Layer::Residual { kernel, .. } => {
                for v in kernel.data_mut() {
                    *v += scale * rng.sample::<f64, _>(rand_distr::StandardNormal);
                }
                if let Layer::Residual {
                    kind:
                        ResidualKind::Additive { alpha } | ResidualKind::PrescaledAdditive { alpha },
                    ..
                } = self
                {
                    *alpha += scale * rng.sample::<f64, _>(rand_distr::StandardNormal);
                }
            }
            Layer::Sll { params, .. } => params.perturb(scale, rng),
            Layer::SllAoc { pre, sll, post, .. } => {
                pre.perturb(scale, rng);
                sll.perturb(scale, rng);
                post.perturb(scale, rng);
            }
            Layer::Sandwich { params, .. } => params.perturb(scale, rng),
            Layer::Activation { act, .. } => act.perturb(scale, rng),
        }
    }

    pub fn build(&self, input: [usize; 2]) -> Result<BuiltLayer> {
        let [h, w] = input;
        Ok(match self {
            Layer::Aoc { cfg, params, scale } => {
                let k = aoc_kernel(params, cfg)?.scale(*scale);
                linear(k, cfg, input, Requirement::Orthogonal)
            }
            Layer::Soc { cfg, params, scale } => {
                let k = soc_explicit_kernel(params, cfg)?.scale(*scale);
                linear(k, cfg, input, Requirement::Orthogonal)
            }
            Layer::Aol { cfg, kernel } => {
                let k = aol_rescale(kernel, cfg.aol_steps, cfg.groups)?;
                linear(k, cfg, input, Requirement::OneLipschitz)
            }
            Layer::Sll { cfg, params } => {
                let layer = SllLayer::new(params, cfg)?;
                nonlinear(move |x| layer.forward(x, relu), [cfg.c_in, h, w], None)
            }
            Layer::SllAoc {
                pre_cfg,
                pre,
                sll_cfg,
                sll,
                post_cfg,
                post,
            } => {
                let kp = aoc_kernel(pre, pre_cfg)?;
                let sp = pre_cfg.conv_spec(kp.kh(), kp.kw());
                let kq = aoc_kernel(post, post_cfg)?;
                let sq = post_cfg.conv_spec(kq.kh(), kq.kw());
                let sll = SllLayer::new(sll, sll_cfg)?;
                let fused = FusedSllAoc::new((&kp, &sp), &sll, (&kq, &sq))?;
                nonlinear(move |x| fused.forward(x, relu), [pre_cfg.c_in, h, w], None)
            }
            Layer::Sandwich { cfg, params } => {
                let layer = SandwichLayer::new(params, cfg)?;
                nonlinear(move |x| layer.forward(x, relu), [cfg.c_in, h, w], None)
            }
            Layer::Activation { act, raw, channels } => {
                let shape = [*channels, h, w];
                match raw {
                    Some(r) => {
                        let raw = vec![*r; channels / 2];
                        let sel = Activation::Householder {
                            v: reflection_selectors(&raw),
                        };
                        nonlinear(
                            move |x| householder_unnormalized(x, &raw),
                            shape,
                            Some(Arc::new(move |x: &FeatureMap| sel.kink_distance(x))),
                        )
                    }
                    None => {
                        let (a, b) = (act.clone(), act.clone());
                        nonlinear(
                            move |x| a.apply(x),
                            shape,
                            Some(Arc::new(move |x: &FeatureMap| b.kink_distance(x))),
                        )
                    }
                }
            }
            Layer::Residual {
                kind,
                channels,
                kernel,
            } => {
                let k = aol_rescale(kernel, 1, 1)?;
                let spec = ConvSpec::same(3, 3, PaddingMode::Circular);
                let act = if k.c_out() % 2 == 0 {
                    Activation::MaxMin
                } else {
                    Activation::Abs
                };
                let kind = *kind;
                let branch = move |x: &FeatureMap| act.apply(&conv2d_forward(x, &k, &spec)?);
                nonlinear(
                    move |x| apply_residual(kind, x, &branch),
                    [*channels, h, w],
                    None,
                )
            }
        })
    }
}

fn linear(
    kernel: Tensor4,
    cfg: &ConvLayerConfig,
    [h, w]: [usize; 2],
    requirement: Requirement,
) -> BuiltLayer {
    let spec = cfg.conv_spec(kernel.kh(), kernel.kw());
    BuiltLayer::Linear {
        kernel,
        spec,
        in_shape: [cfg.c_in, h, w],
        requirement,
    }
}

fn nonlinear(
    f: impl Fn(&FeatureMap) -> Result<FeatureMap> + Send + Sync + 'static,
    in_shape: [usize; 3],
    kink: Option<KinkFn>,
) -> BuiltLayer {
    BuiltLayer::Nonlinear {
        map: Arc::new(f),
        in_shape,
        kink,
    }
}

/// Points within this distance of a kink are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;

/// Options shared by every check of a suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub tolerance: f64,
    pub power_iters: usize,
    pub gram_iters: usize,
    pub jacobian_points: usize,
}

/// Run one spectral method on a built layer. `None` when the method does
/// not apply (FFT off circular stride-1 layers, anything but the Jacobian
/// for non-linear maps).
pub fn check_layer<R: Rng + ?Sized>(
    layer: &BuiltLayer,
    method: SpectrumMethod,
    opts: &CheckOptions,
    rng: &mut R,
) -> Option<Result<SpectrumReport>> {
    let tol = opts.tolerance;
    match layer {
        BuiltLayer::Linear {
            kernel,
            spec,
            in_shape,
            requirement,
        } => {
            let r = match method {
                SpectrumMethod::ToeplitzSvd => toeplitz_svd_spectrum(kernel, spec, *in_shape),
                SpectrumMethod::FftCircular => {
                    if spec.padding_mode != PaddingMode::Circular
                        || spec.stride != (1, 1)
                        || spec.transposed
                    {
                        return None;
                    }
                    fft_circular_spectrum(kernel, spec, (in_shape[1], in_shape[2]))
                }
                SpectrumMethod::GramBound => gram_bound(kernel, spec, opts.gram_iters),
                SpectrumMethod::PowerIter => {
                    operator_power_iteration(kernel, spec, *in_shape, opts.power_iters)
                }
                SpectrumMethod::Jacobian => {
                    let (k, s) = (kernel.clone(), *spec);
                    let pts = match sample_points(*in_shape, opts.jacobian_points, rng, |_| true) {
                        Ok(p) => p,
                        Err(e) => return Some(Err(e)),
                    };
                    jacobian_spectral_check(
                        move |x| apply(x, &k, &s),
                        &pts,
                        *requirement == Requirement::Orthogonal,
                        tol,
                    )
                }
            };
            // only the full spectrum methods can certify a lower bound
            let req = match method {
                SpectrumMethod::ToeplitzSvd
                | SpectrumMethod::FftCircular
                | SpectrumMethod::Jacobian => *requirement,
                _ => Requirement::OneLipschitz,
            };
            Some(r.map(|r| r.with_requirement(req, tol).with_shape(in_shape)))
        }
        BuiltLayer::Nonlinear {
            map,
            in_shape,
            kink,
        } => {
            if method != SpectrumMethod::Jacobian {
                return None;
            }
            let pts = match kink {
                Some(k) => {
                    sample_points(*in_shape, opts.jacobian_points, rng, |x| k(x) > KINK_MARGIN)
                }
                None => sample_points(*in_shape, opts.jacobian_points, rng, |_| true),
            };
            let m = map.clone();
            Some(pts.and_then(|p| jacobian_spectral_check(move |x| m(x), &p, false, tol)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Checked { report: SpectrumReport },
    Rejected { rejection: Rejection },
    Skipped { reason: String },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub layer: String,
    pub round: usize,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl Entry {
    pub fn passed(&self) -> bool {
        match &self.outcome {
            Outcome::Checked { report } => report.passed(),
            Outcome::Skipped { .. } => true,
            Outcome::Rejected { .. } | Outcome::Failed { .. } => false,
        }
    }
}

/// Independent generator for item `index` of a run seeded with `seed`.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

fn run_one(
    label: &str,
    spec: &LayerSpec,
    suite: &SuiteSpec,
    tol_override: Option<f64>,
    index: u64,
) -> Vec<Entry> {
    let entry = |round, outcome| Entry {
        layer: label.to_string(),
        round,
        outcome,
    };
    if let Some(cfg) = spec.config() {
        if let Existence::Reject(r) = existence_check(cfg) {
            return vec![entry(0, Outcome::Rejected { rejection: r })];
        }
    }
    let mut rng = item_rng(suite.seed, index);
    let mut layer = match Layer::random(spec, &mut rng) {
        Ok(l) => l,
        Err(e) => {
            return vec![entry(
                0,
                Outcome::Failed {
                    error: e.to_string(),
                },
            )]
        }
    };
    let opts = CheckOptions {
        tolerance: tol_override
            .or(suite.tolerance)
            .unwrap_or_else(|| spec.tolerance()),
        power_iters: suite.power_iters,
        gram_iters: suite.gram_iters,
        jacobian_points: suite.jacobian_points,
    };
    let mut out = Vec::new();
    for round in 0..=suite.perturb_rounds {
        if round > 0 {
            layer.perturb(suite.perturb_scale, &mut rng);
        }
        let built = match layer.build(suite.input_shape) {
            Ok(b) => b,
            Err(e) => {
                out.push(entry(
                    round,
                    Outcome::Failed {
                        error: e.to_string(),
                    },
                ));
                continue;
            }
        };
        let methods: Vec<SpectrumMethod> = match built {
            BuiltLayer::Nonlinear { .. } => vec![SpectrumMethod::Jacobian],
            BuiltLayer::Linear { .. } => suite.methods.clone(),
        };
        for m in methods {
            let outcome = match check_layer(&built, m, &opts, &mut rng) {
                None => Outcome::Skipped {
                    reason: format!("{m:?} does not apply to this layer"),
                },
                Some(Ok(mut report)) => {
                    report.elapsed = 0.0;
                    Outcome::Checked { report }
                }
                Some(Err(e)) => Outcome::Failed {
                    error: e.to_string(),
                },
            };
            out.push(entry(round, outcome));
        }
    }
    out
}

/// Check every layer of `suite`, in parallel, in layer order. Elapsed times
/// are zeroed so equal suites give equal reports.
pub fn run_suite(suite: &SuiteSpec, tol_override: Option<f64>) -> Vec<Entry> {
    suite
        .layers
        .par_iter()
        .enumerate()
        .map(|(i, l)| {
            run_one(
                &format!("layers[{i}]:{}", l.name()),
                l,
                suite,
                tol_override,
                i as u64,
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// The configuration sweep: kernel sizes 1, 2, 3, 5; strides 1, 2;
/// dilations 1, 2; groups 1, 2; channels (4, 4), (4, 8), (8, 4); both padding
/// modes; transposition with zero padding. SOC takes the square channel
/// pairs only.
pub fn grid_configs() -> Vec<LayerSpec> {
    let mut out = Vec::new();
    for soc in [false, true] {
        for k in [1, 2, 3, 5] {
            for s in [1, 2] {
                for d in [1, 2] {
                    for g in [1, 2] {
                        for (ci, co) in [(4, 4), (4, 8), (8, 4)] {
                            if soc && ci != co {
                                continue;
                            }
                            for mode in [PaddingMode::Circular, PaddingMode::Zero] {
                                for t in [false, true] {
                                    if t && mode == PaddingMode::Circular {
                                        continue;
                                    }
                                    let config = ConvLayerConfig::new(ci, co, k)
                                        .with_stride(s)
                                        .with_dilation(d)
                                        .with_groups(g)
                                        .with_mode(mode)
                                        .with_transposed(t);
                                    out.push(if soc {
                                        LayerSpec::Soc { config, scale: 1.0 }
                                    } else {
                                        LayerSpec::Aoc { config, scale: 1.0 }
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn grid_label(spec: &LayerSpec) -> String {
    let c = spec.config().expect("grid entries carry a config");
    let mode = match c.padding_mode {
        PaddingMode::Circular => "circular",
        PaddingMode::Zero => "zero",
    };
    format!(
        "grid:{} k{} s{} d{} g{} {}->{} {}{}",
        spec.name(),
        c.kernel_size,
        c.stride,
        c.dilation,
        c.groups,
        c.c_in,
        c.c_out,
        mode,
        if c.transposed { " transposed" } else { "" }
    )
}

/// Why a grid entry cannot be checked on `input`, if it cannot: rejected by
/// the existence check, or a zero-padded layer with no output at this size.
pub fn grid_skip_reason(spec: &LayerSpec, input: [usize; 2]) -> Option<String> {
    let cfg = spec.config()?;
    if let Existence::Reject(r) = existence_check(cfg) {
        return Some(format!("rejected: {}", r.reason));
    }
    let k = match spec {
        LayerSpec::Soc { .. } => {
            let m = cfg.kernel_size - cfg.stride + 1;
            let m = if m % 2 == 0 { m + 1 } else { m };
            cfg.soc_terms * (m - 1) + cfg.stride
        }
        _ => cfg.kernel_size,
    };
    let spec = cfg.conv_spec(k, k);
    let (fin, fout) = cfg.forward_channels();
    let shape = Tensor4::zeros([fout, fin / cfg.groups, k, k])
        .and_then(|kt| spec.output_shape(&kt, [cfg.c_in, input[0], input[1]]));
    if shape.is_err() {
        let (eh, ew) = spec.extent(k, k);
        return Some(format!(
            "no output: receptive field {eh}x{ew} on a {}x{} input",
            input[0], input[1]
        ));
    }
    None
}

/// Run the sweep with the Toeplitz oracle at each construction's tolerance.
pub fn run_grid(seed: u64, input: [usize; 2], tol_override: Option<f64>) -> Vec<Entry> {
    let suite = SuiteSpec {
        seed,
        input_shape: input,
        ..SuiteSpec::default()
    };
    grid_configs()
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let label = grid_label(spec);
            match grid_skip_reason(spec, input) {
                Some(reason) => vec![Entry {
                    layer: label,
                    round: 0,
                    outcome: Outcome::Skipped { reason },
                }],
                None => run_one(&label, spec, &suite, tol_override, 1_000_000 + i as u64),
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}
