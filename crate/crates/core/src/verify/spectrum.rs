use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::report::{Requirement, SpectrumMethod, SpectrumReport};
use crate::conv::{toeplitz_assemble, ConvSpec, PaddingMode};
use crate::error::{param_err, Result};
use crate::tensor::Tensor4;

pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Every singular value of the explicit operator on inputs of `in_shape`.
pub fn toeplitz_svd_spectrum(
    k: &Tensor4,
    spec: &ConvSpec,
    in_shape: [usize; 3],
) -> Result<SpectrumReport> {
    let t0 = Instant::now();
    let m = toeplitz_assemble(k, spec, in_shape)?;
    let values: Vec<f64> = m.singular_values().iter().copied().collect();
    Ok(SpectrumReport::from_values(
        SpectrumMethod::ToeplitzSvd,
        values,
        DEFAULT_TOLERANCE,
        Requirement::OneLipschitz,
    )
    .with_shape(&in_shape)
    .with_elapsed(t0.elapsed().as_secs_f64()))
}

/// In-place 2-D FFT of an `h × w` row-major buffer.
pub(crate) fn fft2(
    buf: &mut [Complex64],
    h: usize,
    w: usize,
    planner: &mut FftPlanner<f64>,
    inverse: bool,
) {
    let row = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    row.process(buf);
    let col = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut tmp = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            tmp[y] = buf[y * w + x];
        }
        col.process(&mut tmp);
        for y in 0..h {
            buf[y * w + x] = tmp[y];
        }
    }
}

/// Singular values of a circular, stride-1 convolution on `h × w` inputs,
/// computed frequency by frequency. Padding only contributes a unit phase and
/// is ignored.
pub fn fft_circular_spectrum(
    k: &Tensor4,
    spec: &ConvSpec,
    hw: (usize, usize),
) -> Result<SpectrumReport> {
    let t0 = Instant::now();
    if spec.padding_mode != PaddingMode::Circular || spec.stride != (1, 1) || spec.transposed {
        return param_err("FFT spectrum needs a circular, stride-1, non-transposed convolution");
    }
    spec.validate()?;
    let (h, w) = hw;
    let [co, cig, kh, kw] = k.shape();
    let g_count = spec.groups;
    if co % g_count != 0 {
        return param_err("groups must divide the output channels");
    }
    let cog = co / g_count;
    let (dh, dw) = spec.dilation;
    let n = h * w;
    // symbol[(o, i)][freq]
    let mut planner = FftPlanner::<f64>::new();
    let mut symbols = vec![vec![Complex64::new(0.0, 0.0); n]; co * cig];
    for o in 0..co {
        for i in 0..cig {
            let buf = &mut symbols[o * cig + i];
            for y in 0..kh {
                for x in 0..kw {
                    buf[((y * dh) % h) * w + (x * dw) % w] += k.at(o, i, y, x);
                }
            }
            fft2(buf, h, w, &mut planner, false);
        }
    }
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|f| {
            let symbols = &symbols;
            (0..g_count).flat_map(move |g| {
                let m = DMatrix::<Complex64>::from_fn(cog, cig, |a, b| {
                    symbols[(g * cog + a) * cig + b][f]
                });
                m.singular_values().iter().copied().collect::<Vec<_>>()
            })
        })
        .collect();
    Ok(SpectrumReport::from_values(
        SpectrumMethod::FftCircular,
        values,
        DEFAULT_TOLERANCE,
        Requirement::OneLipschitz,
    )
    .with_shape(&[cig * g_count, h, w])
    .with_elapsed(t0.elapsed().as_secs_f64()))
}
