use rand::Rng;

use super::{aoc_kernel, perturb_slice, AocParams, Contract, ConvLayerConfig, FreeParams};
use crate::conv::{adjoint_into, conv2d_forward, ConvSpec, PaddingMode};
use crate::error::{param_err, shape_err, Result};
use crate::tensor::{FeatureMap, Tensor4};

/// Free parameters of a sandwich layer: one AOC kernel mapping
/// `c_out + c_in` channels to `hidden` channels, the log-scaling `d` and the
/// bias (both of length `hidden`).
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichParams {
    pub aoc: AocParams,
    pub d: Vec<f64>,
    pub bias: Vec<f64>,
    pub hidden: usize,
}

/// AOC config of the joint kernel `[K_A K_B]`: co-isometric, so its rows are
/// orthonormal and `‖K_Aᵀ Λ K_B‖ ≤ 1/2` for every diagonal `0 ≤ Λ ≤ I`.
fn joint_config(cfg: &ConvLayerConfig, hidden: usize) -> Result<ConvLayerConfig> {
    if cfg.stride != 1
        || cfg.groups != 1
        || cfg.transposed
        || cfg.padding_mode != PaddingMode::Circular
    {
        return param_err("sandwich layers use circular, stride-1, ungrouped convolutions");
    }
    if hidden == 0 || hidden > cfg.c_in + cfg.c_out {
        return param_err(format!(
            "hidden width {hidden} must lie in 1..={}",
            cfg.c_in + cfg.c_out
        ));
    }
    Ok(ConvLayerConfig {
        c_in: cfg.c_out + cfg.c_in,
        c_out: hidden,
        contract: Contract::CoIsometry,
        ..*cfg
    })
}

impl SandwichParams {
    pub fn random_with_hidden<R: Rng + ?Sized>(
        cfg: &ConvLayerConfig,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let joint = joint_config(cfg, hidden)?;
        Ok(Self {
            aoc: AocParams::random(&joint, rng)?,
            d: vec![0.0; hidden],
            bias: vec![0.0; hidden],
            hidden,
        })
    }
}

impl FreeParams for SandwichParams {
    fn random<R: Rng + ?Sized>(cfg: &ConvLayerConfig, rng: &mut R) -> Result<Self> {
        Self::random_with_hidden(cfg, cfg.c_in.max(cfg.c_out), rng)
    }

    fn perturb<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        self.aoc.perturb(scale, rng);
        perturb_slice(&mut self.d, scale, rng);
        perturb_slice(&mut self.bias, scale, rng);
    }
}

/// Split `[K_A K_B]` along its input channels: `K_A` takes the first `c_out`.
pub fn split_sandwich_kernel(k: &Tensor4, c_out: usize) -> Result<(Tensor4, Tensor4)> {
    if c_out == 0 || c_out >= k.c_in() {
        return shape_err(format!(
            "cannot split {} input channels at {c_out}",
            k.c_in()
        ));
    }
    Ok((k.slice_in(0, c_out)?, k.slice_in(c_out, k.c_in())?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichLayer {
    pub k_a: Tensor4,
    pub k_b: Tensor4,
    pub d: Vec<f64>,
    pub bias: Vec<f64>,
    pub spec: ConvSpec,
}

impl SandwichLayer {
    pub fn new(params: &SandwichParams, cfg: &ConvLayerConfig) -> Result<Self> {
        let joint = joint_config(cfg, params.hidden)?;
        if params.d.len() != params.hidden || params.bias.len() != params.hidden {
            return shape_err("d and bias must have one entry per hidden channel");
        }
        let k = aoc_kernel(&params.aoc, &joint)?;
        let spec = joint.conv_spec(k.kh(), k.kw());
        let (k_a, k_b) = split_sandwich_kernel(&k, cfg.c_out)?;
        Ok(Self {
            k_a,
            k_b,
            d: params.d.clone(),
            bias: params.bias.clone(),
            spec,
        })
    }

    pub fn forward(&self, h: &FeatureMap, act: impl Fn(f64) -> f64) -> Result<FeatureMap> {
        sandwich_aoc_forward(
            h, &self.k_a, &self.k_b, &self.d, &self.bias, &self.spec, act,
        )
    }
}

/// `h_out = √2 K_Aᵀ ∗ Ψ σ(√2 Ψ⁻¹ K_B ∗ h + b)` with `Ψ = diag(eᵈ)`.
pub fn sandwich_aoc_forward(
    h: &FeatureMap,
    k_a: &Tensor4,
    k_b: &Tensor4,
    d: &[f64],
    bias: &[f64],
    spec: &ConvSpec,
    act: impl Fn(f64) -> f64,
) -> Result<FeatureMap> {
    if k_a.c_out() != k_b.c_out() || d.len() != k_a.c_out() || bias.len() != k_a.c_out() {
        return shape_err("K_A, K_B, d and bias disagree on the hidden width");
    }
    let mut z = conv2d_forward(h, k_b, spec)?;
    let plane = z.height() * z.width();
    let r2 = std::f64::consts::SQRT_2;
    for (i, v) in z.data_mut().iter_mut().enumerate() {
        let c = i / plane;
        let psi = d[c].exp();
        *v = psi * act(r2 * *v / psi + bias[c]);
    }
    Ok(adjoint_into(&z, k_a, spec, h.height(), h.width())?.scale(r2))
}
