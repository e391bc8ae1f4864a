//! Kernel fusion: one kernel whose correlation equals two correlations in sequence.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor4;

/// Kernel of `conv(k1) ∘ conv(k2)`.
///
/// `F[a, b, t] = Σ_c Σ_{i + i' = t} k1[a, c, i] · k2[c, b, i']`, with spatial
/// size `k1 + k2 - 1` per axis. Applying `F` with the two paddings summed (and
/// `k1`'s stride) reproduces the sequential result exactly under circular
/// padding, and under zero padding whenever the inner convolution does not crop
/// any nonzero output (e.g. full padding `k2 - 1`).
pub fn block_conv_fuse(k1: &Tensor4, k2: &Tensor4) -> Result<Tensor4> {
    if k1.c_in() != k2.c_out() {
        return shape_err(format!(
            "fuse: outer kernel takes {} channels, inner kernel produces {}",
            k1.c_in(),
            k2.c_out()
        ));
    }
    let [a_n, _, h1, w1] = k1.shape();
    let [_, b_n, h2, w2] = k2.shape();
    let (fh, fw) = (h1 + h2 - 1, w1 + w2 - 1);
    let mut f = Tensor4::zeros([a_n, b_n, fh, fw])?;
    for iy in 0..h1 {
        for ix in 0..w1 {
            let t1 = k1.tap(iy, ix);
            if t1.iter().all(|v| *v == 0.0) {
                continue;
            }
            for jy in 0..h2 {
                for jx in 0..w2 {
                    let t2 = k2.tap(jy, jx);
                    let p = &t1 * &t2;
                    for a in 0..a_n {
                        for b in 0..b_n {
                            *f.at_mut(a, b, iy + jy, ix + jx) += p[(a, b)];
                        }
                    }
                }
            }
        }
    }
    Ok(f)
}

/// Group-wise fusion of grouped kernels sharing the same group count.
///
/// `k1` has shape `(c_out, c_mid / g, ...)` and `k2` `(c_mid, c_in / g, ...)`.
pub fn fuse_grouped(k1: &Tensor4, k2: &Tensor4, groups: usize) -> Result<Tensor4> {
    if groups == 1 {
        return block_conv_fuse(k1, k2);
    }
    if !k1.c_out().is_multiple_of(groups)
        || !k2.c_out().is_multiple_of(groups)
        || k2.c_out() / groups != k1.c_in()
    {
        return shape_err(format!(
            "fuse_grouped: incompatible shapes {:?} and {:?} for {groups} groups",
            k1.shape(),
            k2.shape()
        ));
    }
    let (o1, o2) = (k1.c_out() / groups, k2.c_out() / groups);
    let parts = (0..groups)
        .map(|g| {
            block_conv_fuse(
                &k1.slice_out(g * o1, (g + 1) * o1)?,
                &k2.slice_out(g * o2, (g + 1) * o2)?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor4::concat_out(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    #[test]
    fn delta_is_identity_element() {
        let k = Tensor4::from_vec(
            [2, 3, 2, 2],
            (0..24).map(|v| v as f64 * 0.1 - 1.0).collect(),
        )
        .unwrap();
        let f = block_conv_fuse(&k, &Tensor4::identity(3, 1)).unwrap();
        assert_eq!(f, k);
        let f = block_conv_fuse(&Tensor4::identity(2, 1), &k).unwrap();
        assert_eq!(f, k);
    }

    #[test]
    fn one_by_one_is_matmul() {
        let a = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 3.0]);
        let b = Matrix::from_row_slice(3, 2, &[0.2, 1.0, -2.0, 0.0, 1.5, 4.0]);
        let f = block_conv_fuse(&Tensor4::from_matrix(&a), &Tensor4::from_matrix(&b)).unwrap();
        assert!((f.as_matrix().unwrap() - a * b).norm() < 1e-15);
    }

    #[test]
    fn rejects_channel_mismatch() {
        let a = Tensor4::zeros([2, 3, 1, 1]).unwrap();
        let b = Tensor4::zeros([2, 2, 1, 1]).unwrap();
        assert!(block_conv_fuse(&a, &b).is_err());
    }
}
