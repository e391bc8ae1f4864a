use rand::Rng;
use rayon::prelude::*;

use super::bcop::bcop_kernel_unchecked;
use super::{rko_kernel, BcopParams, ConvLayerConfig, FreeParams, RkoParams};
use crate::error::{param_err, shape_err, Result};
use crate::fuse::block_conv_fuse;
use crate::tensor::Tensor4;

/// Internal factor sizes of one AOC group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AocPlan {
    pub fin: usize,
    pub fout: usize,
    /// Width of the stride-1 factor.
    pub c_mid: usize,
    /// Spatial size of the stride-1 factor, `k - s + 1`.
    pub inner_size: usize,
    pub isometric: bool,
}

impl AocPlan {
    pub fn new(cfg: &ConvLayerConfig) -> Result<Self> {
        cfg.validate()?;
        let (k, s) = (cfg.kernel_size, cfg.stride);
        if k < s {
            return param_err(format!("kernel size {k} is smaller than stride {s}"));
        }
        let d = cfg.group_dims();
        let s2 = s * s;
        // isometric: BCOP (sliced to fin inputs) then a tall RKO;
        // co-isometric: square BCOP then a wide RKO
        let c_mid = if d.isometric { d.fout / s2 } else { d.fin };
        if d.isometric && c_mid < d.fin {
            return param_err(format!(
                "no isometric factorization: {} outputs < {} inputs x stride^2 {s2}",
                d.fout, d.fin
            ));
        }
        if !d.isometric && d.fout > d.fin * s2 {
            return param_err(format!(
                "no co-isometric factorization: {} outputs > {} inputs x stride^2 {s2}",
                d.fout, d.fin
            ));
        }
        Ok(Self {
            fin: d.fin,
            fout: d.fout,
            c_mid,
            inner_size: k - s + 1,
            isometric: d.isometric,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AocGroupParams {
    pub rko: RkoParams,
    pub bcop: BcopParams,
}

/// One parameter set per group.
#[derive(Debug, Clone, PartialEq)]
pub struct AocParams {
    pub groups: Vec<AocGroupParams>,
}

impl FreeParams for AocParams {
    fn random<R: Rng + ?Sized>(cfg: &ConvLayerConfig, rng: &mut R) -> Result<Self> {
        let plan = AocPlan::new(cfg)?;
        let groups = (0..cfg.groups)
            .map(|_| AocGroupParams {
                rko: RkoParams::random(plan.c_mid, plan.fout, cfg.stride, rng),
                bcop: BcopParams::random(plan.c_mid, plan.inner_size, rng),
            })
            .collect();
        Ok(Self { groups })
    }

    fn perturb<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        for g in &mut self.groups {
            g.rko.perturb(scale, rng);
            g.bcop.perturb(scale, rng);
        }
    }
}

/// Forward kernel `RKO ⊛ BCOP` of shape `(fout, fin / g, k, k)`, applied with
/// `cfg.conv_spec(k, k)` (a transposed layer applies it with the transposed
/// convolution).
pub fn aoc_kernel(params: &AocParams, cfg: &ConvLayerConfig) -> Result<Tensor4> {
    let plan = AocPlan::new(cfg)?;
    if params.groups.len() != cfg.groups {
        return shape_err(format!(
            "{} parameter groups for {} groups",
            params.groups.len(),
            cfg.groups
        ));
    }
    let s = cfg.stride;
    let parts = params
        .groups
        .par_iter()
        .map(|g| {
            let mut inner =
                bcop_kernel_unchecked(&g.bcop, plan.c_mid, plan.inner_size, &cfg.ortho)?;
            if plan.fin < plan.c_mid {
                inner = inner.slice_in(0, plan.fin)?;
            }
            let outer = rko_kernel(&g.rko, plan.c_mid, plan.fout, s, &cfg.ortho)?;
            block_conv_fuse(&outer, &inner)
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor4::concat_out(&parts)
}
