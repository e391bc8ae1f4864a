use rand::Rng;

use super::aol::{abs_correlation, scale_inputs};
use super::{perturb_slice, random_kernel, ConvLayerConfig, FreeParams};
use crate::conv::{adjoint_into, conv2d_forward, ConvSpec, Padding};
use crate::error::{param_err, shape_err, Result};
use crate::tensor::{FeatureMap, Tensor4};

pub fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Kernel `K` (`c → c`), bias (one per output channel of `K`) and the raw
/// log-scaling vector `q` (one per input channel).
#[derive(Debug, Clone, PartialEq)]
pub struct SllParams {
    pub kernel: Tensor4,
    pub bias: Vec<f64>,
    pub q: Vec<f64>,
}

impl FreeParams for SllParams {
    fn random<R: Rng + ?Sized>(cfg: &ConvLayerConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if cfg.c_in != cfg.c_out || cfg.stride != 1 {
            return param_err("SLL layers keep the channel count and use stride 1");
        }
        let c = cfg.c_in;
        let kernel = random_kernel([c, c / cfg.groups, cfg.kernel_size, cfg.kernel_size], rng)?;
        Ok(Self {
            kernel,
            bias: vec![0.0; c],
            q: vec![0.0; c],
        })
    }

    fn perturb<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        perturb_slice(self.kernel.data_mut(), scale, rng);
        perturb_slice(&mut self.bias, scale, rng);
        perturb_slice(&mut self.q, scale, rng);
    }
}

/// `K T^{-1/2}` with `T_ii = Σ_j Σ_Δ |V_ij(Δ)| · q_j / q_i`, `q = exp(q_raw)`.
pub fn sll_rescale(kernel: &Tensor4, q_raw: &[f64], groups: usize) -> Result<Tensor4> {
    let ci = kernel.c_in();
    if q_raw.len() != ci * groups {
        return shape_err(format!(
            "q has {} entries, kernel takes {} channels",
            q_raw.len(),
            ci * groups
        ));
    }
    let w = abs_correlation(kernel, groups)?;
    let t: Vec<Vec<f64>> = w
        .iter()
        .enumerate()
        .map(|(g, w)| {
            let q: Vec<f64> = (0..ci).map(|i| q_raw[g * ci + i].exp()).collect();
            (0..ci)
                .map(|i| (0..ci).map(|j| w[(i, j)] * q[j] / q[i]).sum())
                .collect()
        })
        .collect();
    Ok(scale_inputs(kernel, &t, groups, |v| {
        if v > 0.0 {
            1.0 / v.sqrt()
        } else {
            1.0
        }
    }))
}

/// SLL residual block with its rescaled kernel materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct SllLayer {
    pub kernel: Tensor4,
    pub bias: Vec<f64>,
    pub spec: ConvSpec,
}

impl SllLayer {
    pub fn new(params: &SllParams, cfg: &ConvLayerConfig) -> Result<Self> {
        cfg.validate()?;
        let kernel = sll_rescale(&params.kernel, &params.q, cfg.groups)?;
        if params.bias.len() != kernel.c_out() {
            return shape_err("bias length must equal the kernel's output channels");
        }
        let spec = ConvSpec::default()
            .with_dilation(cfg.dilation)
            .with_groups(cfg.groups)
            .with_mode(cfg.padding_mode);
        let (eh, ew) = spec.extent(kernel.kh(), kernel.kw());
        let spec = spec.with_padding(Padding::split(eh - 1, ew - 1));
        Ok(Self {
            kernel,
            bias: params.bias.clone(),
            spec,
        })
    }

    pub fn forward(&self, x: &FeatureMap, act: impl Fn(f64) -> f64) -> Result<FeatureMap> {
        sll_forward(x, &self.kernel, &self.bias, &self.spec, act)
    }
}

/// `y = x − 2 Kᵀ σ(K x + b)` for an already rescaled kernel.
pub fn sll_forward(
    x: &FeatureMap,
    kernel: &Tensor4,
    bias: &[f64],
    spec: &ConvSpec,
    act: impl Fn(f64) -> f64,
) -> Result<FeatureMap> {
    if spec.stride != (1, 1) {
        return param_err("SLL needs stride 1");
    }
    let mut z = conv2d_forward(x, kernel, spec)?;
    if z.shape()[1..] != x.shape()[1..] {
        return shape_err("SLL convolution must preserve the spatial size");
    }
    if bias.len() != z.channels() {
        return shape_err(format!(
            "bias has {} entries for {} channels",
            bias.len(),
            z.channels()
        ));
    }
    let plane = z.height() * z.width();
    for (i, v) in z.data_mut().iter_mut().enumerate() {
        *v = act(*v + bias[i / plane]);
    }
    let back = adjoint_into(&z, kernel, spec, x.height(), x.width())?;
    x.zip_with(&back, |a, b| a - 2.0 * b)
}
