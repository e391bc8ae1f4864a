use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::report::{Requirement, SpectrumMethod, SpectrumReport};
use super::spectrum::{fft2, DEFAULT_TOLERANCE};
use crate::conv::{transpose_kernel, ConvSpec};
use crate::error::{param_err, Error, Result};
use crate::fuse::block_conv_fuse;
use crate::tensor::{Matrix, Tensor4};

/// Largest `c² · N²` buffer the frequency-domain squaring may allocate.
const MAX_BUFFER: usize = 1 << 23;

/// Group-diagonal dense kernel: `(c_out, c_in_total, kh, kw)`.
fn densify(k: &Tensor4, groups: usize) -> Result<Tensor4> {
    if groups == 1 {
        return Ok(k.clone());
    }
    let [co, cig, kh, kw] = k.shape();
    let cog = co / groups;
    let mut d = Tensor4::zeros([co, cig * groups, kh, kw])?;
    for o in 0..co {
        let g = o / cog;
        for i in 0..cig {
            for y in 0..kh {
                for x in 0..kw {
                    *d.at_mut(o, g * cig + i, y, x) = k.at(o, i, y, x);
                }
            }
        }
    }
    Ok(d)
}

/// Stride-`s` correlation rewritten as a stride-1 correlation over the
/// `s × s` polyphase components of the input.
fn polyphase(k: &Tensor4, sh: usize, sw: usize) -> Result<Tensor4> {
    if sh == 1 && sw == 1 {
        return Ok(k.clone());
    }
    let [co, ci, kh, kw] = k.shape();
    let (ph, pw) = (kh.div_ceil(sh), kw.div_ceil(sw));
    let mut p = Tensor4::zeros([co, ci * sh * sw, ph, pw])?;
    for o in 0..co {
        for i in 0..ci {
            for y in 0..kh {
                for x in 0..kw {
                    let c = (i * sh + y % sh) * sw + x % sw;
                    *p.at_mut(o, c, y / sh, x / sw) = k.at(o, i, y, x);
                }
            }
        }
    }
    Ok(p)
}

/// `G ⊛ G` through the FFT (linear convolution of the tap grids with a
/// matrix product per frequency).
fn square_kernel(g: &Tensor4) -> Result<Tensor4> {
    let [c, c2, m, m2] = g.shape();
    debug_assert_eq!(c, c2);
    let (nh, nw) = (2 * m - 1, 2 * m2 - 1);
    if c * c * nh * nw > MAX_BUFFER {
        return param_err(format!(
            "Gram iteration kernel {nh}x{nw} with {c} channels is too large; use fewer iterations"
        ));
    }
    let n = nh * nw;
    let spectra: Vec<Vec<Complex64>> = (0..c * c)
        .into_par_iter()
        .map(|ab| {
            let (a, b) = (ab / c, ab % c);
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for y in 0..m {
                for x in 0..m2 {
                    buf[y * nw + x] = Complex64::new(g.at(a, b, y, x), 0.0);
                }
            }
            fft2(&mut buf, nh, nw, &mut FftPlanner::new(), false);
            buf
        })
        .collect();
    let out: Vec<Vec<f64>> = (0..c * c)
        .into_par_iter()
        .map(|ab| {
            let (a, b) = (ab / c, ab % c);
            let mut buf: Vec<Complex64> = (0..n)
                .map(|f| {
                    (0..c)
                        .map(|k| spectra[a * c + k][f] * spectra[k * c + b][f])
                        .sum()
                })
                .collect();
            fft2(&mut buf, nh, nw, &mut FftPlanner::new(), true);
            buf.iter().map(|v| v.re / n as f64).collect()
        })
        .collect();
    let mut data = Vec::with_capacity(c * c * n);
    for plane in out {
        data.extend(plane);
    }
    Tensor4::from_vec([c, c, nh, nw], data)
}

fn tap_norm_sum(g: &Tensor4) -> f64 {
    let (kh, kw) = (g.kh(), g.kw());
    (0..kh * kw)
        .into_par_iter()
        .map(|t| {
            let m: Matrix = g.tap(t / kw, t % kw);
            if m.iter().all(|v| *v == 0.0) {
                0.0
            } else {
                m.singular_values().max()
            }
        })
        .sum()
}

/// Sequence of Gram-iteration bounds for iterations `1..=iters`.
///
/// The bound holds for the convolution on the unbounded grid and therefore
/// for every zero-padded or circular restriction of it, for any input size.
/// With `normalize` off, the kernel is not rescaled between iterations and
/// an overflow is reported as [`Error::NonFinite`].
pub fn gram_bound_sequence(
    k: &Tensor4,
    spec: &ConvSpec,
    iters: usize,
    normalize: bool,
) -> Result<Vec<f64>> {
    if iters == 0 {
        return param_err("gram iterations must be at least 1");
    }
    spec.validate()?;
    let dense = densify(k, spec.groups)?.dilate(spec.dilation.0, spec.dilation.1)?;
    let p = polyphase(&dense, spec.stride.0, spec.stride.1)?;
    let pt = transpose_kernel(&p, 1)?;
    // Gram on the smaller side: TTᵀ and TᵀT share their nonzero spectrum
    let mut g = if p.c_out() <= p.c_in() {
        block_conv_fuse(&p, &pt)?
    } else {
        block_conv_fuse(&pt, &p)?
    };
    let mut log_scale = 0.0f64;
    let mut bounds = Vec::with_capacity(iters);
    for t in 1..=iters {
        if t > 1 {
            g = square_kernel(&g)?;
            log_scale *= 2.0;
        }
        if normalize {
            let f = g.frobenius();
            if f > 0.0 {
                g = g.scale(1.0 / f);
                log_scale += f.ln();
            }
        }
        let overflow = || {
            Err(Error::NonFinite(format!(
                "Gram iteration overflowed at step {t}"
            )))
        };
        if g.data().iter().any(|v| !v.is_finite()) {
            return overflow();
        }
        let s = tap_norm_sum(&g);
        if !s.is_finite() {
            return overflow();
        }
        let b = if s == 0.0 {
            0.0
        } else {
            ((log_scale + s.ln()) / 2f64.powi(t as i32)).exp()
        };
        bounds.push(b);
    }
    Ok(bounds)
}

/// Certified upper bound on the operator norm after `iters` Gram iterations.
pub fn gram_bound(k: &Tensor4, spec: &ConvSpec, iters: usize) -> Result<SpectrumReport> {
    let t0 = Instant::now();
    let b = *gram_bound_sequence(k, spec, iters, true)?.last().unwrap();
    Ok(SpectrumReport::new(
        SpectrumMethod::GramBound,
        b,
        0.0,
        DEFAULT_TOLERANCE,
        Requirement::OneLipschitz,
    )
    .with_elapsed(t0.elapsed().as_secs_f64()))
}
