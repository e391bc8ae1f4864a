//! Dense orthogonalization: Björck–Bowie, augmented Cayley, truncated
//! exponential, Cholesky whitening and modified Gram–Schmidt, plus power
//! iteration spectral normalization.
//!
//! Rectangular inputs follow the semi-orthogonality contract: the Gram matrix
//! on the short side is the identity.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::linalg::{cholesky_lower, forward_substitute, lu_solve, orthogonality_residual};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OrthoMethod {
    #[default]
    Bjorck,
    Cayley,
    Exp,
    Cholesky,
    Qr,
}

impl std::str::FromStr for OrthoMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bjorck" => Ok(Self::Bjorck),
            "cayley" => Ok(Self::Cayley),
            "exp" => Ok(Self::Exp),
            "cholesky" => Ok(Self::Cholesky),
            "qr" => Ok(Self::Qr),
            other => param_err(format!("unknown orthogonalization method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrthoParams {
    pub method: OrthoMethod,
    /// Björck step size, in `(0, 1/2]`.
    pub beta: f64,
    /// Björck iteration count.
    pub iterations: usize,
    /// Björck convergence target on `‖QᵀQ - I‖_F`; exceeded after the last
    /// iteration is reported as [`Error::NotConverged`].
    pub tolerance: f64,
    /// Number of terms of the exponential series.
    pub exp_terms: usize,
    /// Cholesky regularizer.
    pub epsilon: f64,
    /// Number of Cholesky whitening passes; each pass re-whitens the previous
    /// output. One pass is the plain `L⁻¹W` solve, whose residual is
    /// `ε (WWᵀ + εI)⁻¹` and so grows with the conditioning of `W`; each further
    /// pass maps the Gram eigenvalues `μ ↦ μ / (μ + ε)`, and three passes
    /// reach the `√n · ε` floor for condition numbers up to about `1e6`.
    pub cholesky_passes: usize,
    pub pre_normalize: bool,
    pub power_iters: usize,
}

impl Default for OrthoParams {
    fn default() -> Self {
        Self {
            method: OrthoMethod::Bjorck,
            beta: 0.5,
            iterations: 25,
            tolerance: 1e-5,
            exp_terms: 12,
            epsilon: 1e-6,
            cholesky_passes: 3,
            pre_normalize: true,
            power_iters: 10,
        }
    }
}

impl OrthoParams {
    pub fn with_method(method: OrthoMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return param_err(format!("beta must lie in (0, 1/2], got {}", self.beta));
        }
        if !(self.epsilon > 0.0) {
            return param_err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.iterations == 0
            || self.exp_terms == 0
            || self.power_iters == 0
            || self.cholesky_passes == 0
        {
            return param_err("iteration counts must be positive");
        }
        Ok(())
    }
}

/// Leading right singular vector remembered between calls on the same weight.
#[derive(Debug, Clone, Default)]
pub struct PowerCache {
    vector: Option<DVector<f64>>,
}

impl PowerCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vector(&self) -> Option<&DVector<f64>> {
        self.vector.as_ref()
    }
}

/// Deterministic start vector with no special alignment to coordinate axes.
fn start_vector(n: usize) -> DVector<f64> {
    let v = DVector::from_fn(n, |i, _| {
        1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_75).fract()
    });
    let nrm = v.norm();
    v / nrm
}

/// Largest singular value estimate by power iteration on `WᵀW`.
pub fn power_sigma(w: &Matrix, iters: usize, cache: Option<&mut PowerCache>) -> f64 {
    let n = w.ncols();
    let mut v = match cache.as_ref().and_then(|c| c.vector.clone()) {
        Some(v) if v.len() == n && v.norm() > 0.0 => v,
        _ => start_vector(n),
    };
    let mut sigma = 0.0;
    for _ in 0..iters {
        let u = w * &v;
        let z = w.transpose() * &u;
        let nz = z.norm();
        if nz == 0.0 {
            sigma = 0.0;
            break;
        }
        v = z / nz;
        sigma = (w * &v).norm();
    }
    if let Some(c) = cache {
        c.vector = Some(v);
    }
    sigma
}

/// Returns `W / σ̂` and `σ̂`.
pub fn spectral_normalize(
    w: &Matrix,
    power_iters: usize,
    cache: Option<&mut PowerCache>,
) -> Result<(Matrix, f64)> {
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let sigma = power_sigma(w, power_iters.max(1), cache);
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::NonFinite(format!("spectral norm estimate {sigma}")));
    }
    Ok((w / sigma, sigma))
}

/// Björck–Bowie fixed point `W ← (1+β)W − β W WᵀW`. The input is expected
/// to have spectral norm at most one (see `pre_normalize`).
pub fn bjorck_orthogonalize(w: &Matrix, params: &OrthoParams) -> Result<Matrix> {
    Ok(bjorck_trace(w, params)?.0)
}

/// Björck iterates together with the residual after every step.
pub fn bjorck_trace(w: &Matrix, params: &OrthoParams) -> Result<(Matrix, Vec<f64>)> {
    params.validate()?;
    let mut q = if params.pre_normalize {
        spectral_normalize(w, params.power_iters, None)?.0
    } else {
        w.clone()
    };
    // iterate on the wide orientation so W Wᵀ is the small Gram
    let tall = q.nrows() > q.ncols();
    if tall {
        q = q.transpose();
    }
    let b = params.beta;
    let mut residuals = Vec::with_capacity(params.iterations);
    for _ in 0..params.iterations {
        let gram = &q * q.transpose();
        q = &q * (1.0 + b) - (&gram * &q) * b;
        residuals.push(orthogonality_residual(&q));
    }
    let last = *residuals.last().unwrap_or(&f64::INFINITY);
    if !last.is_finite() || last > params.tolerance {
        return Err(Error::NotConverged {
            iterations: params.iterations,
            residual: last,
        });
    }
    Ok((if tall { q.transpose() } else { q }, residuals))
}

/// Augmented Cayley transform for a tall `M × C` input (wide inputs are
/// handled through the transpose). `A = U − Uᵀ + VᵀV` is used as is.
pub fn cayley_augmented(w: &Matrix) -> Result<Matrix> {
    if w.nrows() < w.ncols() {
        return Ok(cayley_augmented(&w.transpose())?.transpose());
    }
    let c = w.ncols();
    let u = w.rows(0, c).into_owned();
    let v = w.rows(c, w.nrows() - c).into_owned();
    let eye = Matrix::identity(c, c);
    let a = &u - u.transpose() + v.transpose() * &v;
    let ipa = &eye + &a;
    let b = lu_solve(&ipa, &eye).map_err(|_| Error::Singular("I + A is singular".into()))?;
    let w1 = &b * (&eye - &a);
    let w2 = (&v * &b) * -2.0;
    let mut out = Matrix::zeros(w.nrows(), c);
    out.rows_mut(0, c).copy_from(&w1);
    out.rows_mut(c, w.nrows() - c).copy_from(&w2);
    Ok(out)
}

/// Truncated exponential of the normalized skew part: `Σ_{k≤p} Âᵏ/k!`.
pub fn exp_orthogonalize(w: &Matrix, p: usize, power_iters: usize) -> Result<Matrix> {
    if !w.is_square() {
        return param_err(format!(
            "exponential map needs a square matrix, got {:?}",
            w.shape()
        ));
    }
    if p == 0 {
        return param_err("exp_terms must be >= 1");
    }
    let n = w.nrows();
    let a = w - w.transpose();
    let eye = Matrix::identity(n, n);
    if a.iter().all(|&v| v == 0.0) {
        return Ok(eye);
    }
    let (a_hat, _) = spectral_normalize(&a, power_iters, None)?;
    let mut out = eye.clone();
    let mut term = eye;
    for k in 1..=p {
        term = (&term * &a_hat) / k as f64;
        out += &term;
    }
    Ok(out)
}

/// `Ŵ = L⁻¹W` where `LLᵀ = WWᵀ + εI`. Tall inputs go through the transpose.
pub fn cholesky_orthogonalize(w: &Matrix, epsilon: f64) -> Result<Matrix> {
    if !(epsilon > 0.0) {
        return param_err("epsilon must be positive");
    }
    if w.nrows() > w.ncols() {
        return Ok(cholesky_orthogonalize(&w.transpose(), epsilon)?.transpose());
    }
    let n = w.nrows();
    let gram = w * w.transpose() + Matrix::identity(n, n) * epsilon;
    let l = cholesky_lower(&gram)?;
    forward_substitute(&l, w)
}

/// Modified Gram–Schmidt QR. Returns `(Q, R)` with `diag(R) > 0`.
/// Wide inputs are not supported here; see [`orthogonalize`].
pub fn mgs_qr_factor(w: &Matrix) -> Result<(Matrix, Matrix)> {
    let (m, n) = w.shape();
    if m < n {
        return param_err("mgs_qr needs rows >= columns");
    }
    let mut q = w.clone();
    let mut r = Matrix::zeros(n, n);
    let scale = w.norm().max(f64::MIN_POSITIVE);
    for j in 0..n {
        let nrm = q.column(j).norm();
        if nrm <= scale * 1e-13 {
            return Err(Error::Singular(format!("rank deficient at column {j}")));
        }
        r[(j, j)] = nrm;
        let qj = q.column(j) / nrm;
        q.set_column(j, &qj);
        for k in j + 1..n {
            let d = qj.dot(&q.column(k));
            r[(j, k)] = d;
            let upd = q.column(k) - &qj * d;
            q.set_column(k, &upd);
        }
    }
    // r[j][j] is a norm, hence already positive; sign(diag R) = +1 here
    Ok((q, r))
}

/// Orthogonal factor of the MGS QR factorization (sign convention `diag(R) > 0`).
pub fn mgs_qr(w: &Matrix) -> Result<Matrix> {
    if w.nrows() < w.ncols() {
        return Ok(mgs_qr_factor(&w.transpose())?.0.transpose());
    }
    Ok(mgs_qr_factor(w)?.0)
}

/// Run the method selected by `params`, with optional spectral pre-normalization.
pub fn orthogonalize(w: &Matrix, params: &OrthoParams) -> Result<Matrix> {
    params.validate()?;
    if params.method == OrthoMethod::Bjorck {
        return bjorck_orthogonalize(w, params);
    }
    let w = if params.pre_normalize {
        spectral_normalize(w, params.power_iters, None)?.0
    } else {
        w.clone()
    };
    match params.method {
        OrthoMethod::Bjorck => unreachable!(),
        OrthoMethod::Cayley => cayley_augmented(&w),
        OrthoMethod::Exp => exp_orthogonalize(&w, params.exp_terms, params.power_iters),
        OrthoMethod::Cholesky => {
            let mut q = cholesky_orthogonalize(&w, params.epsilon)?;
            for _ in 1..params.cholesky_passes {
                q = cholesky_orthogonalize(&q, params.epsilon)?;
            }
            Ok(q)
        }
        OrthoMethod::Qr => mgs_qr(&w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::determinant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng))
    }

    fn polar(w: &Matrix) -> Matrix {
        let svd = w.clone().svd(true, true);
        svd.u.unwrap() * svd.v_t.unwrap()
    }

    #[test]
    fn spectral_normalize_cases() {
        let (m, s) = spectral_normalize(&Matrix::identity(3, 3), 10, None).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        assert!((m - Matrix::identity(3, 3)).norm() < 1e-15);

        let d = Matrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let (m, s) = spectral_normalize(&d, 10, None).unwrap();
        assert!((s - 2.0).abs() < 1e-9);
        let want = Matrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5]));
        assert!((m - want).norm() < 1e-9);

        let w = randn(8, 8, 3);
        let (_, s) = spectral_normalize(&w, 50, None).unwrap();
        let smax = w.clone().singular_values().max();
        assert!((s - smax).abs() < 1e-6, "{s} vs {smax}");

        assert_eq!(
            spectral_normalize(&Matrix::zeros(2, 2), 5, None),
            Err(Error::ZeroMatrix)
        );
    }

    #[test]
    fn power_cache_warm_start() {
        let w = randn(6, 6, 9);
        let mut cache = PowerCache::new();
        let _ = power_sigma(&w, 40, Some(&mut cache));
        let warm = power_sigma(&w, 1, Some(&mut cache));
        let smax = w.clone().singular_values().max();
        assert!((warm - smax).abs() < 1e-8);
        assert!(cache.vector().is_some());
    }

    #[test]
    fn bjorck_fixed_points_and_polar() {
        let p = OrthoParams::default();
        let i4 = Matrix::identity(4, 4);
        assert!((bjorck_orthogonalize(&i4, &p).unwrap() - &i4).norm() < 1e-12);
        let q = mgs_qr(&randn(5, 5, 1)).unwrap();
        assert!((bjorck_orthogonalize(&q, &p).unwrap() - &q).norm() < 1e-10);

        let w = randn(4, 4, 2);
        let got = bjorck_orthogonalize(&w, &p).unwrap();
        assert!((got - polar(&w)).norm() < 1e-5);
    }

    #[test]
    fn bjorck_residual_monotone() {
        let p = OrthoParams::default();
        for seed in 0..5 {
            let (_, res) = bjorck_trace(&randn(10, 10, seed), &p).unwrap();
            for w in res.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-14, "{res:?}");
            }
        }
    }

    #[test]
    fn bjorck_reports_non_convergence() {
        let p = OrthoParams {
            iterations: 2,
            ..OrthoParams::default()
        };
        assert!(matches!(
            bjorck_orthogonalize(&randn(8, 8, 4), &p),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(OrthoParams {
            beta: 0.6,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OrthoParams {
            beta: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OrthoParams {
            epsilon: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OrthoParams::default().validate().is_ok());
    }

    #[test]
    fn cayley_cases() {
        let z = Matrix::zeros(3, 3);
        assert!((cayley_augmented(&z).unwrap() - Matrix::identity(3, 3)).norm() < 1e-15);

        let u = randn(4, 4, 5);
        let skew = &u - u.transpose();
        let q = cayley_augmented(&skew).unwrap();
        assert!(orthogonality_residual(&q) < 1e-10);

        let w = randn(6, 3, 6);
        let q = cayley_augmented(&w).unwrap();
        assert_eq!(q.shape(), (6, 3));
        assert!(orthogonality_residual(&q) < 1e-8);
    }

    #[test]
    fn exp_cases() {
        let s = randn(3, 3, 7);
        let sym = &s + s.transpose();
        assert_eq!(
            exp_orthogonalize(&sym, 12, 10).unwrap(),
            Matrix::identity(3, 3)
        );

        let theta = 0.7;
        let w = Matrix::from_row_slice(2, 2, &[0.3, -theta + 0.1, 0.1, 0.3]);
        // W - Wᵀ = [[0, -θ], [θ, 0]]
        let q = exp_orthogonalize(&w, 12, 10).unwrap();
        let want = Matrix::from_row_slice(2, 2, &[1f64.cos(), -1f64.sin(), 1f64.sin(), 1f64.cos()]);
        assert!((q - want).norm() < 1e-9);

        let q = exp_orthogonalize(&randn(5, 5, 8), 12, 10).unwrap();
        assert!(orthogonality_residual(&q) <= 1e-6);
        assert!((determinant(&q) - 1.0).abs() <= 1e-6);

        assert!(exp_orthogonalize(&randn(3, 2, 1), 12, 10).is_err());
    }

    #[test]
    fn cholesky_cases() {
        let q = mgs_qr(&randn(6, 3, 10)).unwrap().transpose();
        let got = cholesky_orthogonalize(&q, 1e-12).unwrap();
        assert!((got - &q).norm() < 1e-9);

        let d = Matrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0]));
        let got = cholesky_orthogonalize(&d, 1e-14).unwrap();
        assert!((got - Matrix::identity(2, 2)).norm() < 1e-12);

        let w = randn(4, 8, 11);
        let got = cholesky_orthogonalize(&w, 1e-6).unwrap();
        assert!(orthogonality_residual(&got) <= 1e-5);
    }

    #[test]
    fn qr_cases() {
        assert_eq!(
            mgs_qr(&Matrix::identity(3, 3)).unwrap(),
            Matrix::identity(3, 3)
        );
        // QR = W with diag(R) > 0 is unique, so -I factors as (-I)(I)
        let (q, r) = mgs_qr_factor(&(-Matrix::identity(3, 3))).unwrap();
        assert_eq!(q, -Matrix::identity(3, 3));
        assert_eq!(r, Matrix::identity(3, 3));
        let w = randn(6, 6, 12);
        let (q, r) = mgs_qr_factor(&w).unwrap();
        assert!((&q * &r - &w).norm() < 1e-10);
        for i in 0..6 {
            assert!(r[(i, i)] > 0.0);
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
        assert!(orthogonality_residual(&q) < 1e-10);
        let mut rank1 = Matrix::zeros(3, 3);
        rank1.set_column(0, &DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert!(matches!(mgs_qr(&rank1), Err(Error::Singular(_))));
    }

    #[test]
    fn dispatch_rectangular() {
        for method in [
            OrthoMethod::Bjorck,
            OrthoMethod::Cayley,
            OrthoMethod::Cholesky,
            OrthoMethod::Qr,
        ] {
            for (r, c) in [(3, 7), (7, 3)] {
                let q = orthogonalize(&randn(r, c, 13), &OrthoParams::with_method(method)).unwrap();
                assert_eq!(q.shape(), (r, c));
                assert!(orthogonality_residual(&q) < 1e-5, "{method:?} {r}x{c}");
            }
        }
    }
}
