//! Orthogonal and 1-Lipschitz convolution constructions.
//!
//! Every construction turns unconstrained parameters into an explicit kernel
//! once; applying the layer afterwards is a single plain convolution.

mod aoc;
mod aol;
mod bcop;
mod config;
pub mod io;
mod rko;
mod sandwich;
mod sll;
mod sll_aoc;
mod soc;

pub use aoc::{aoc_kernel, AocGroupParams, AocParams, AocPlan};
pub use aol::{aol_bounds, aol_rescale};
pub use bcop::{bcop_kernel, projector_kernel, BcopParams};
pub use config::{Contract, ConvLayerConfig, GroupDims};
pub use rko::{rko_kernel, RkoParams};
pub use sandwich::{sandwich_aoc_forward, split_sandwich_kernel, SandwichLayer, SandwichParams};
pub use sll::{relu, sll_forward, sll_rescale, SllLayer, SllParams};
pub use sll_aoc::{sll_aoc_unfused, FusedSllAoc};
pub use soc::{
    skew_symmetrize, soc_explicit_kernel, soc_implicit_apply, soc_series_kernel, SocGroupParams,
    SocParams,
};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::ortho::{orthogonalize, OrthoMethod, OrthoParams};
use crate::tensor::{Matrix, Tensor4};

/// Unconstrained parameters of a construction, sized by a layer config.
pub trait FreeParams: Sized {
    /// Standard normal entries scaled by `1/√fan_in`.
    fn random<R: Rng + ?Sized>(cfg: &ConvLayerConfig, rng: &mut R) -> Result<Self>;

    /// Add `scale`-sized Gaussian noise to every parameter.
    fn perturb<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R);
}

pub(crate) fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let s = 1.0 / (cols as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| s * rng.sample::<f64, _>(StandardNormal))
}

pub(crate) fn perturb_slice<R: Rng + ?Sized>(v: &mut [f64], scale: f64, rng: &mut R) {
    for x in v {
        *x += scale * rng.sample::<f64, _>(StandardNormal);
    }
}

pub(crate) fn perturb_matrix<R: Rng + ?Sized>(m: &mut Matrix, scale: f64, rng: &mut R) {
    perturb_slice(m.as_mut_slice(), scale, rng);
}

pub fn random_kernel<R: Rng + ?Sized>(shape: [usize; 4], rng: &mut R) -> Result<Tensor4> {
    let fan_in = shape[1] * shape[2] * shape[3];
    Tensor4::random(shape, 1.0 / (fan_in as f64).sqrt(), rng)
}

/// Semi-orthogonal factor of any rectangular matrix. The exponential map is
/// only defined for square inputs, so rectangular inputs are embedded into a
/// square zero-padded matrix first and the leading block is kept.
pub(crate) fn semi_orthogonal(w: &Matrix, params: &OrthoParams) -> Result<Matrix> {
    if params.method != OrthoMethod::Exp || w.is_square() {
        return orthogonalize(w, params);
    }
    let (r, c) = w.shape();
    let n = r.max(c);
    let mut sq = Matrix::zeros(n, n);
    sq.view_mut((0, 0), (r, c)).copy_from(w);
    let q = orthogonalize(&sq, params)?;
    Ok(q.view((0, 0), (r, c)).into_owned())
}
