//! Reference implementations used as oracles: a direct sliding-window
//! convolution, dense operators assembled from it and SVD helpers.
#![allow(dead_code)]

use orthokit::{ConvSpec, FeatureMap, Matrix, PaddingMode, Tensor4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Direct grouped, strided, dilated cross-correlation, one output at a time.
pub fn naive_conv(x: &FeatureMap, k: &Tensor4, spec: &ConvSpec) -> FeatureMap {
    let [ci, h, w] = x.shape();
    let [co, cig, kh, kw] = k.shape();
    let g = spec.groups;
    assert_eq!(ci, cig * g);
    let cog = co / g;
    let (sh, sw) = spec.stride;
    let (dh, dw) = spec.dilation;
    let p = spec.padding;
    let eh = dh * (kh - 1) + 1;
    let ew = dw * (kw - 1) + 1;
    let oh = (h + p.top + p.bottom - eh) / sh + 1;
    let ow = (w + p.left + p.right - ew) / sw + 1;
    let mut out = FeatureMap::zeros([co, oh, ow]).unwrap();
    for o in 0..co {
        let grp = o / cog;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for il in 0..cig {
                    let c = grp * cig + il;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * sh + ky * dh) as isize - p.top as isize;
                            let ix = (ox * sw + kx * dw) as isize - p.left as isize;
                            let v = match spec.padding_mode {
                                PaddingMode::Zero => {
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    x.at(c, iy as usize, ix as usize)
                                }
                                PaddingMode::Circular => x.at(
                                    c,
                                    iy.rem_euclid(h as isize) as usize,
                                    ix.rem_euclid(w as isize) as usize,
                                ),
                            };
                            acc += k.at(o, il, ky, kx) * v;
                        }
                    }
                }
                *out.at_mut(o, oy, ox) = acc;
            }
        }
    }
    out
}

/// Dense matrix of any linear map on feature maps of `in_shape`, one column
/// per unit impulse.
pub fn dense_of(f: impl Fn(&FeatureMap) -> FeatureMap, in_shape: [usize; 3]) -> Matrix {
    let n: usize = in_shape.iter().product();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = FeatureMap::zeros(in_shape).unwrap();
        e.data_mut()[j] = 1.0;
        cols.push(f(&e).into_vec());
    }
    Matrix::from_fn(cols[0].len(), n, |i, j| cols[j][i])
}

pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let mut v: Vec<f64> = m.singular_values().iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Nonzero singular values (those above `1e-9`) of the naive operator.
pub fn naive_spectrum(k: &Tensor4, spec: &ConvSpec, in_shape: [usize; 3]) -> Vec<f64> {
    let m = dense_of(|x| naive_conv(x, k, spec), in_shape);
    singular_values(&m)
}

/// `‖MᵀM − I‖_F` on the short side of `m`.
pub fn gram_residual(m: &Matrix) -> f64 {
    let g = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    (g.clone() - Matrix::identity(g.nrows(), g.ncols())).norm()
}

pub fn random_matrix(r: usize, c: usize, seed: u64) -> Matrix {
    use rand::Rng;
    let mut g = rng(seed);
    Matrix::from_fn(r, c, |_, _| g.sample::<f64, _>(rand_distr::StandardNormal))
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Central-difference Jacobian of `f` at `x`.
pub fn numeric_jacobian(f: impl Fn(&FeatureMap) -> FeatureMap, x: &FeatureMap, h: f64) -> Matrix {
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut a = x.clone();
        let mut b = x.clone();
        a.data_mut()[j] += h;
        b.data_mut()[j] -= h;
        let fa = f(&a).into_vec();
        let fb = f(&b).into_vec();
        cols.push(
            fa.iter()
                .zip(&fb)
                .map(|(p, q)| (p - q) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    Matrix::from_fn(cols[0].len(), n, |i, j| cols[j][i])
}

pub fn sigma_max(m: &Matrix) -> f64 {
    m.singular_values().max()
}
