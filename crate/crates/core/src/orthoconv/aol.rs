use crate::conv::ConvSpec;
use crate::error::{param_err, shape_err, Result};
use crate::tensor::{Matrix, Tensor4};
use crate::verify::gram_bound_sequence;

/// `W[i, j] = Σ_Δ |V_ij(Δ)|` per group, where `V` is the kernel of `KᵀK`
/// (the self-correlation of `k` contracted over output channels).
pub(crate) fn abs_correlation(k: &Tensor4, groups: usize) -> Result<Vec<Matrix>> {
    let [co, ci, kh, kw] = k.shape();
    if groups == 0 || co % groups != 0 {
        return shape_err(format!(
            "groups {groups} do not divide {co} output channels"
        ));
    }
    let cog = co / groups;
    let mut out = Vec::with_capacity(groups);
    for g in 0..groups {
        let mut w = Matrix::zeros(ci, ci);
        for dy in 0..2 * kh - 1 {
            for dx in 0..2 * kw - 1 {
                // shift (dy - kh + 1, dx - kw + 1)
                let mut v = Matrix::zeros(ci, ci);
                for y in 0..kh {
                    let y2 = y as isize + dy as isize - kh as isize + 1;
                    if y2 < 0 || y2 >= kh as isize {
                        continue;
                    }
                    for x in 0..kw {
                        let x2 = x as isize + dx as isize - kw as isize + 1;
                        if x2 < 0 || x2 >= kw as isize {
                            continue;
                        }
                        for o in g * cog..(g + 1) * cog {
                            for i in 0..ci {
                                let a = k.at(o, i, y, x);
                                if a == 0.0 {
                                    continue;
                                }
                                for j in 0..ci {
                                    v[(i, j)] += a * k.at(o, j, y2 as usize, x2 as usize);
                                }
                            }
                        }
                    }
                }
                w += v.abs();
            }
        }
        out.push(w);
    }
    Ok(out)
}

/// Per-group vectors `d_i = Σ_j Σ_Δ |V_ij(Δ)|`.
pub fn aol_bounds(k: &Tensor4, groups: usize) -> Result<Vec<Vec<f64>>> {
    Ok(abs_correlation(k, groups)?
        .into_iter()
        .map(|w| w.row_iter().map(|r| r.sum()).collect())
        .collect())
}

/// Scale input channel `i` of `k` (per group) by `d_i^{-1/2}`; channels with
/// `d_i = 0` are left as they are.
///
/// With `steps > 1` the rescaled kernel is further divided by its Gram
/// iteration bound after `steps - 1` iterations whenever that bound is below
/// one. The bound is certified and non-increasing in the iteration count, so
/// more steps never loosen the normalization.
pub fn aol_rescale(k: &Tensor4, steps: usize, groups: usize) -> Result<Tensor4> {
    if steps == 0 {
        return param_err("aol steps must be at least 1");
    }
    let d = aol_bounds(k, groups)?;
    let scaled = scale_inputs(
        k,
        &d,
        groups,
        |v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 },
    );
    if steps == 1 {
        return Ok(scaled);
    }
    let spec = ConvSpec::default().with_groups(groups);
    let bound = *gram_bound_sequence(&scaled, &spec, steps - 1, true)?
        .last()
        .unwrap();
    Ok(if bound > 0.0 && bound < 1.0 {
        scaled.scale(1.0 / bound)
    } else {
        scaled
    })
}

/// Multiply `k[o, i, ..]` by `f(d[group(o)][i])`.
pub(crate) fn scale_inputs(
    k: &Tensor4,
    d: &[Vec<f64>],
    groups: usize,
    f: impl Fn(f64) -> f64,
) -> Tensor4 {
    let [co, ci, kh, kw] = k.shape();
    let cog = co / groups;
    let mut out = k.clone();
    let data = out.data_mut();
    for o in 0..co {
        for (i, &di) in d[o / cog].iter().enumerate().take(ci) {
            let s = f(di);
            let base = (o * ci + i) * kh * kw;
            for v in &mut data[base..base + kh * kw] {
                *v *= s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_unchanged() {
        let k = Tensor4::identity(3, 1);
        assert_eq!(aol_rescale(&k, 1, 1).unwrap(), k);
    }

    #[test]
    fn doubled_identity_rescaled_to_identity() {
        let k = Tensor4::identity(3, 1).scale(2.0);
        let r = aol_rescale(&k, 1, 1).unwrap();
        assert!(r.max_abs_diff(&Tensor4::identity(3, 1)) < 1e-15);
    }

    #[test]
    fn zero_channel_passes_through() {
        let mut k = Tensor4::identity(2, 1);
        *k.at_mut(1, 1, 0, 0) = 0.0;
        let r = aol_rescale(&k, 2, 1).unwrap();
        assert_eq!(r, k);
    }
}
