use rand::Rng;

use super::{perturb_matrix, random_matrix, semi_orthogonal};
use crate::error::{param_err, shape_err, Result};
use crate::fuse::block_conv_fuse;
use crate::ortho::OrthoParams;
use crate::tensor::{Matrix, Tensor4};

/// Free parameters of a `c`-channel, `k × k` BCOP kernel: one square matrix
/// for the 1×1 factor and `2(k - 1)` matrices of shape `c × ⌊c/2⌋` whose
/// orthonormalized columns span the projectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BcopParams {
    pub q: Matrix,
    pub projectors: Vec<Matrix>,
}

impl BcopParams {
    pub fn random<R: Rng + ?Sized>(c: usize, k: usize, rng: &mut R) -> Self {
        let q = random_matrix(c, c, rng);
        let rank = (c / 2).max(1);
        let projectors = (0..2 * (k - 1))
            .map(|_| random_matrix(c, rank, rng))
            .collect();
        Self { q, projectors }
    }

    pub fn channels(&self) -> usize {
        self.q.nrows()
    }

    pub fn kernel_size(&self) -> usize {
        self.projectors.len() / 2 + 1
    }

    pub fn perturb<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        perturb_matrix(&mut self.q, scale, rng);
        for p in &mut self.projectors {
            perturb_matrix(p, scale, rng);
        }
    }
}

/// Elementary kernel `[P | I − P]`, laid out along x (`1 × 2`) or y (`2 × 1`).
pub fn projector_kernel(p: &Matrix, horizontal: bool) -> Result<Tensor4> {
    if !p.is_square() {
        return shape_err("projector must be square");
    }
    let c = p.nrows();
    let shape = if horizontal {
        [c, c, 1, 2]
    } else {
        [c, c, 2, 1]
    };
    let mut t = Tensor4::zeros(shape)?;
    let rest = Matrix::identity(c, c) - p;
    for a in 0..c {
        for b in 0..c {
            let (y1, x1) = if horizontal { (0, 1) } else { (1, 0) };
            *t.at_mut(a, b, 0, 0) = p[(a, b)];
            *t.at_mut(a, b, y1, x1) = rest[(a, b)];
        }
    }
    Ok(t)
}

/// Orthogonal `c → c` kernel of size `k × k` under circular padding.
pub fn bcop_kernel(
    params: &BcopParams,
    c: usize,
    k: usize,
    ortho: &OrthoParams,
) -> Result<Tensor4> {
    if k > 1 && c < 2 {
        return param_err("BCOP with k > 1 needs at least 2 channels");
    }
    bcop_kernel_unchecked(params, c, k, ortho)
}

/// As [`bcop_kernel`], but a single channel is allowed: its projectors are
/// zero and the elementary kernels become plain shifts.
pub(crate) fn bcop_kernel_unchecked(
    params: &BcopParams,
    c: usize,
    k: usize,
    ortho: &OrthoParams,
) -> Result<Tensor4> {
    if k == 0 {
        return param_err("kernel size must be positive");
    }
    if params.q.shape() != (c, c) || params.projectors.len() != 2 * (k - 1) {
        return shape_err(format!(
            "BCOP params ({:?}, {} projectors) do not match c = {c}, k = {k}",
            params.q.shape(),
            params.projectors.len()
        ));
    }
    let q = semi_orthogonal(&params.q, ortho)?;
    let mut kernel = Tensor4::from_matrix(&q);
    let rank = c / 2;
    for (i, free) in params.projectors.iter().enumerate() {
        if free.nrows() != c {
            return shape_err("projector parameter has the wrong row count");
        }
        let p = if rank == 0 {
            Matrix::zeros(c, c)
        } else {
            let u = semi_orthogonal(&free.columns(0, rank.min(free.ncols())).into_owned(), ortho)?;
            &u * u.transpose()
        };
        kernel = block_conv_fuse(&kernel, &projector_kernel(&p, i % 2 == 0)?)?;
    }
    Ok(kernel)
}
