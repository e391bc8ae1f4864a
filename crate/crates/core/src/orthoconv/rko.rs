use rand::Rng;

use super::{perturb_matrix, random_matrix, semi_orthogonal};
use crate::error::{shape_err, Result};
use crate::ortho::OrthoParams;
use crate::tensor::{Matrix, Tensor4};

/// Free matrix of an RKO factor: `c_out × (c_in · s²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RkoParams {
    pub m: Matrix,
}

impl RkoParams {
    pub fn random<R: Rng + ?Sized>(c_in: usize, c_out: usize, s: usize, rng: &mut R) -> Self {
        Self {
            m: random_matrix(c_out, c_in * s * s, rng),
        }
    }

    pub fn perturb<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        perturb_matrix(&mut self.m, scale, rng);
    }
}

/// `s × s` kernel from the semi-orthogonalized reshaped matrix. Applied with
/// stride `s` the patches do not overlap, so the operator inherits the
/// matrix's orthonormal rows or columns.
pub fn rko_kernel(
    params: &RkoParams,
    c_in: usize,
    c_out: usize,
    s: usize,
    ortho: &OrthoParams,
) -> Result<Tensor4> {
    if params.m.shape() != (c_out, c_in * s * s) {
        return shape_err(format!(
            "RKO matrix {:?} does not match {c_out} x {}",
            params.m.shape(),
            c_in * s * s
        ));
    }
    let q = semi_orthogonal(&params.m, ortho)?;
    let mut k = Tensor4::zeros([c_out, c_in, s, s])?;
    for o in 0..c_out {
        for c in 0..c_in {
            for y in 0..s {
                for x in 0..s {
                    *k.at_mut(o, c, y, x) = q[(o, (c * s + y) * s + x)];
                }
            }
        }
    }
    Ok(k)
}
