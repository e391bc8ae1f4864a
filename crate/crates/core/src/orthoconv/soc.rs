use rand::Rng;
use rayon::prelude::*;

use super::aol::aol_bounds;
use super::{perturb_slice, random_kernel, rko_kernel, ConvLayerConfig, FreeParams, RkoParams};
use crate::conv::{conv2d_forward, ConvSpec, PaddingMode};
use crate::error::{param_err, shape_err, Result};
use crate::fuse::block_conv_fuse;
use crate::tensor::{FeatureMap, Tensor4};

/// Free parameters of one SOC group: a square kernel and, when the layer
/// strides or changes width, an RKO factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SocGroupParams {
    pub kernel: Tensor4,
    pub rko: Option<RkoParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocParams {
    pub groups: Vec<SocGroupParams>,
}

#[derive(Debug, Clone, Copy)]
struct SocPlan {
    fin: usize,
    fout: usize,
    c_mid: usize,
    free_size: usize,
    needs_rko: bool,
}

impl SocPlan {
    fn new(cfg: &ConvLayerConfig) -> Result<Self> {
        cfg.validate()?;
        let (k, s) = (cfg.kernel_size, cfg.stride);
        if k < s {
            return param_err(format!("kernel size {k} is smaller than stride {s}"));
        }
        let d = cfg.group_dims();
        let s2 = s * s;
        let c_mid = if d.isometric { d.fout / s2 } else { d.fin };
        if (d.isometric && c_mid < d.fin) || (!d.isometric && d.fout > d.fin * s2) {
            return param_err("channel counts admit no orthogonal factorization");
        }
        // the skew part needs a centre tap, so even sizes grow by one
        let m = k - s + 1;
        let free_size = if m % 2 == 0 { m + 1 } else { m };
        let needs_rko = s > 1 || d.fin != d.fout;
        Ok(Self {
            fin: d.fin,
            fout: d.fout,
            c_mid,
            free_size,
            needs_rko,
        })
    }
}

impl FreeParams for SocParams {
    fn random<R: Rng + ?Sized>(cfg: &ConvLayerConfig, rng: &mut R) -> Result<Self> {
        let plan = SocPlan::new(cfg)?;
        let groups = (0..cfg.groups)
            .map(|_| {
                let kernel = random_kernel(
                    [plan.c_mid, plan.c_mid, plan.free_size, plan.free_size],
                    rng,
                )?;
                let rko = plan
                    .needs_rko
                    .then(|| RkoParams::random(plan.c_mid, plan.fout, cfg.stride, rng));
                Ok(SocGroupParams { kernel, rko })
            })
            .collect::<Result<_>>()?;
        Ok(Self { groups })
    }

    fn perturb<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        for g in &mut self.groups {
            perturb_slice(g.kernel.data_mut(), scale, rng);
            if let Some(r) = &mut g.rko {
                r.perturb(scale, rng);
            }
        }
    }
}

/// `(K[a,b,i,j] − K[b,a,m−1−i,m−1−j]) / 2`: the kernel of the skew-adjoint
/// part of the circular operator. Needs square channels and an odd size.
pub fn skew_symmetrize(k: &Tensor4) -> Result<Tensor4> {
    let [a_n, b_n, kh, kw] = k.shape();
    if a_n != b_n {
        return shape_err(format!(
            "skew part needs square channels, got {a_n} x {b_n}"
        ));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return shape_err("skew part needs odd spatial sizes");
    }
    let mut s = Tensor4::zeros(k.shape())?;
    for a in 0..a_n {
        for b in 0..b_n {
            for y in 0..kh {
                for x in 0..kw {
                    *s.at_mut(a, b, y, x) =
                        0.5 * (k.at(a, b, y, x) - k.at(b, a, kh - 1 - y, kw - 1 - x));
                }
            }
        }
    }
    Ok(s)
}

/// Skew part divided by `√(max_i d_i)`, which bounds its operator norm by one.
pub(crate) fn normalized_skew(k: &Tensor4) -> Result<Tensor4> {
    let s = skew_symmetrize(k)?;
    let dmax = aol_bounds(&s, 1)?[0].iter().cloned().fold(0.0, f64::max);
    Ok(if dmax > 0.0 {
        s.scale(1.0 / dmax.sqrt())
    } else {
        s
    })
}

/// Explicit kernel of `Σ_{j=0}^{n} Sʲ/j!` for the normalized skew part `S`
/// of `k`; spatial size `n(m − 1) + 1`.
pub fn soc_series_kernel(k: &Tensor4, terms: usize) -> Result<Tensor4> {
    if terms == 0 {
        return param_err("soc_terms must be at least 1");
    }
    let s = normalized_skew(k)?;
    let (c, m) = (s.c_out(), s.kh());
    let size = terms * (m - 1) + 1;
    let mut out = Tensor4::identity(c, size);
    let mut term = Tensor4::identity(c, 1);
    for j in 1..=terms {
        term = block_conv_fuse(&s, &term)?.scale(1.0 / j as f64);
        let off = (terms - j) * (m - 1) / 2;
        out = out.add(&term.pad_spatial(size, size, off, off)?)?;
    }
    Ok(out)
}

/// Applies the truncated series term by term with circular "same" padding,
/// never materializing the large kernel.
pub fn soc_implicit_apply(k: &Tensor4, terms: usize, x: &FeatureMap) -> Result<FeatureMap> {
    if terms == 0 {
        return param_err("soc_terms must be at least 1");
    }
    let s = normalized_skew(k)?;
    let spec = ConvSpec::same(s.kh(), s.kw(), PaddingMode::Circular);
    let mut acc = x.clone();
    let mut term = x.clone();
    for j in 1..=terms {
        term = conv2d_forward(&term, &s, &spec)?.scale(1.0 / j as f64);
        acc = acc.zip_with(&term, |a, b| a + b)?;
    }
    Ok(acc)
}

/// Forward kernel of the SOC layer, `(fout, fin / g, K, K)` with
/// `K = n(m − 1) + s` where `m` is the free kernel size.
pub fn soc_explicit_kernel(params: &SocParams, cfg: &ConvLayerConfig) -> Result<Tensor4> {
    let plan = SocPlan::new(cfg)?;
    if params.groups.len() != cfg.groups {
        return shape_err(format!(
            "{} parameter groups for {} groups",
            params.groups.len(),
            cfg.groups
        ));
    }
    let parts = params
        .groups
        .par_iter()
        .map(|g| {
            if g.kernel.c_out() != plan.c_mid || g.kernel.kh() != plan.free_size {
                return shape_err(format!(
                    "SOC kernel {:?} does not match the layer",
                    g.kernel.shape()
                ));
            }
            let mut inner = soc_series_kernel(&g.kernel, cfg.soc_terms)?;
            if plan.fin < plan.c_mid {
                inner = inner.slice_in(0, plan.fin)?;
            }
            match (&g.rko, plan.needs_rko) {
                (Some(r), true) => {
                    let outer = rko_kernel(r, plan.c_mid, plan.fout, cfg.stride, &cfg.ortho)?;
                    block_conv_fuse(&outer, &inner)
                }
                (None, false) => Ok(inner),
                _ => shape_err("RKO factor presence does not match the layer"),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor4::concat_out(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_kernel_gives_delta() {
        let k = Tensor4::zeros([3, 3, 3, 3]).unwrap();
        let e = soc_series_kernel(&k, 4).unwrap();
        assert_eq!(e, Tensor4::identity(3, 9));
    }

    #[test]
    fn symmetric_kernel_has_no_skew_part() {
        let mut k = Tensor4::zeros([2, 2, 3, 3]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for y in 0..3 {
                    for x in 0..3 {
                        let v =
                            1.0 + (a + b) as f64 + (y as f64 - 1.0).abs() + (x as f64 - 1.0).abs();
                        *k.at_mut(a, b, y, x) = v;
                    }
                }
            }
        }
        assert!(skew_symmetrize(&k).unwrap().frobenius() == 0.0);
        assert_eq!(soc_series_kernel(&k, 8).unwrap(), Tensor4::identity(2, 17));
    }

    #[test]
    fn series_kernel_size() {
        let k =
            Tensor4::from_vec([2, 2, 3, 3], (0..36).map(|v| (v as f64).sin()).collect()).unwrap();
        assert_eq!(soc_series_kernel(&k, 8).unwrap().kh(), 17);
        assert_eq!(soc_series_kernel(&k, 3).unwrap().kh(), 7);
    }
}
