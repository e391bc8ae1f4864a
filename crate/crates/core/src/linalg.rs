//! Small dense solvers used by the orthogonalizers.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Solve `A X = B` by LU with partial pivoting.
pub fn lu_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Shape(format!(
            "lu_solve: A {:?}, B {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let (piv, pval) =
            (col..n)
                .map(|r| (r, lu[(r, col)].abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if pval <= scale * 1e-14 {
            return Err(Error::Singular(format!("zero pivot in column {col}")));
        }
        if piv != col {
            lu.swap_rows(piv, col);
            x.swap_rows(piv, col);
        }
        let d = lu[(col, col)];
        for r in col + 1..n {
            let f = lu[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            lu[(r, col)] = f;
            for c in col + 1..n {
                lu[(r, c)] -= f * lu[(col, c)];
            }
            for c in 0..x.ncols() {
                x[(r, c)] -= f * x[(col, c)];
            }
        }
    }
    for c in 0..x.ncols() {
        for r in (0..n).rev() {
            let mut s = x[(r, c)];
            for k in r + 1..n {
                s -= lu[(r, k)] * x[(k, c)];
            }
            x[(r, c)] = s / lu[(r, r)];
        }
    }
    Ok(x)
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape("cholesky needs a square matrix".into()));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Cholesky { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solve `L X = B` for lower-triangular `L`.
pub fn forward_substitute(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = l.nrows();
    if l.ncols() != n || b.nrows() != n {
        return Err(Error::Shape(
            "forward_substitute: dimension mismatch".into(),
        ));
    }
    let mut x = b.clone();
    for c in 0..b.ncols() {
        for r in 0..n {
            let mut s = x[(r, c)];
            for k in 0..r {
                s -= l[(r, k)] * x[(k, c)];
            }
            if l[(r, r)] == 0.0 {
                return Err(Error::Singular(format!("zero diagonal at {r}")));
            }
            x[(r, c)] = s / l[(r, r)];
        }
    }
    Ok(x)
}

/// `‖G - I‖_F` where `G` is the Gram matrix on the short side of `q`.
pub fn orthogonality_residual(q: &Matrix) -> f64 {
    let g = if q.nrows() >= q.ncols() {
        q.transpose() * q
    } else {
        q * q.transpose()
    };
    let n = g.nrows();
    (g - Matrix::identity(n, n)).norm()
}

/// Determinant via LU; `0.0` for singular input.
pub fn determinant(a: &Matrix) -> f64 {
    a.clone().lu().determinant()
}
