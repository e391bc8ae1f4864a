use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::report::{Requirement, SpectrumMethod, SpectrumReport, Verdict};
use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Matrix};

pub const FD_STEP: f64 = 1e-5;
pub const JACOBIAN_TOLERANCE: f64 = 1e-4;

/// Jacobian of `f` at `x` by central differences with step [`FD_STEP`].
pub fn finite_difference_jacobian<F>(f: &F, x: &FeatureMap) -> Result<Matrix>
where
    F: Fn(&FeatureMap) -> Result<FeatureMap> + Sync,
{
    let n = x.len();
    let cols: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut xp = x.clone();
            xp.data_mut()[j] += FD_STEP;
            let mut xm = x.clone();
            xm.data_mut()[j] -= FD_STEP;
            let (yp, ym) = (f(&xp)?, f(&xm)?);
            let col: Vec<f64> = yp
                .data()
                .iter()
                .zip(ym.data())
                .map(|(a, b)| (a - b) / (2.0 * FD_STEP))
                .collect();
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("map produced a non-finite output".into()));
            }
            Ok(col)
        })
        .collect();
    let mut m: Option<Matrix> = None;
    for (j, c) in cols.into_iter().enumerate() {
        let c = c?;
        let m = m.get_or_insert_with(|| Matrix::zeros(c.len(), n));
        m.column_mut(j).copy_from_slice(&c);
    }
    Ok(m.unwrap_or_else(|| Matrix::zeros(0, 0)))
}

/// Standard normal points of `in_shape`, redrawn until `accept` holds
/// (used to stay away from kinks of piecewise-smooth maps).
pub fn sample_points<R: Rng + ?Sized>(
    in_shape: [usize; 3],
    n: usize,
    rng: &mut R,
    accept: impl Fn(&FeatureMap) -> bool,
) -> Result<Vec<FeatureMap>> {
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n {
        let x = FeatureMap::random(in_shape, rng)?;
        tries += 1;
        if accept(&x) {
            out.push(x);
        } else if tries > 1000 * n.max(1) {
            return Err(Error::InvalidParam(
                "could not sample points away from the non-smooth set".into(),
            ));
        }
    }
    Ok(out)
}

/// Finite-difference Jacobian SVD at each point. Fails (verdict
/// `violation`, witness = offending input) when `σ_max > 1 + tol`, or when
/// `require_iso` and `σ_min < 1 − tol`.
pub fn jacobian_spectral_check<F>(
    f: F,
    points: &[FeatureMap],
    require_iso: bool,
    tol: f64,
) -> Result<SpectrumReport>
where
    F: Fn(&FeatureMap) -> Result<FeatureMap> + Sync,
{
    let t0 = Instant::now();
    let requirement = if require_iso {
        Requirement::Orthogonal
    } else {
        Requirement::OneLipschitz
    };
    let mut hi = 0.0f64;
    let mut lo = f64::INFINITY;
    let mut witness = None;
    for x in points {
        let j = finite_difference_jacobian(&f, x)?;
        let sv = j.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let bad = smax > 1.0 + tol || (require_iso && smin < 1.0 - tol);
        if bad && witness.is_none() {
            witness = Some(x.data().to_vec());
        }
        hi = hi.max(smax);
        lo = lo.min(smin);
    }
    if points.is_empty() {
        lo = 0.0;
    }
    let mut r = SpectrumReport::new(SpectrumMethod::Jacobian, hi, lo, tol, requirement)
        .with_shape(
            points
                .first()
                .map(|p| p.shape().to_vec())
                .unwrap_or_default()
                .as_slice(),
        )
        .with_elapsed(t0.elapsed().as_secs_f64());
    if witness.is_some() {
        r.verdict = Verdict::Violation;
    }
    r.witness = witness;
    Ok(r)
}
