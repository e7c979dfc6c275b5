//! Small dense solvers in `f64`: Cholesky factorization and the
//! Moore–Penrose pseudoinverse of a full-column-rank matrix.

use alloc::format;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::{Error, Result};

/// Lower-triangular `L` with `L Lᵀ = a`. Fails if `a` is not numerically
/// positive definite.
pub fn cholesky(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("square matrix columns", n, a.ncols()));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        // Row-major friendly: column j below the diagonal.
        for i in j + 1..n {
            let (ri, rj) = (l.row(i), l.row(j));
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= ri[k] * rj[k];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor.
pub fn cholesky_solve_vec(l: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.to_owned();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Solves `a X = b` column by column for symmetric positive definite `a`.
pub fn spd_solve(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if b.nrows() != a.nrows() {
        return Err(Error::dim("right-hand side rows", a.nrows(), b.nrows()));
    }
    let l = cholesky(a)?;
    let mut x = Array2::zeros(b.raw_dim());
    for (j, col) in b.columns().into_iter().enumerate() {
        x.column_mut(j).assign(&cholesky_solve_vec(l.view(), col));
    }
    Ok(x)
}

/// `(AᵀA)⁻¹Aᵀ` for a tall matrix with full column rank.
pub fn pinv_full_column_rank(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if a.nrows() < a.ncols() {
        return Err(Error::arg("pseudoinverse helper expects rows >= columns"));
    }
    let gram = a.t().dot(&a);
    spd_solve(gram.view(), a.t())
}

/// Minimum-norm `h` with `h · a = y`, for `a` of shape `n × m` (`n ≥ m`,
/// full column rank): `h = a (aᵀa)⁻¹ y`.
pub fn min_norm_row_solution(a: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if y.len() != a.ncols() {
        return Err(Error::dim("target length", a.ncols(), y.len()));
    }
    let gram = a.t().dot(&a);
    let l = cholesky(gram.view())?;
    let z = cholesky_solve_vec(l.view(), y);
    Ok(a.dot(&z))
}
