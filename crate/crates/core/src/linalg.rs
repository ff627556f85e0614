//! Small dense linear-algebra helpers used throughout the crate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Jitter escalation ladder for nearly rank-deficient covariance matrices:
/// multiples of the mean diagonal, from 1e-12 up to 1e-8.
const JITTER_LADDER: [f64; 5] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Cholesky factorization with escalating diagonal jitter.
///
/// Fine grids of smooth processes produce numerically rank-deficient
/// covariances; a tiny multiple of the mean diagonal restores positive
/// definiteness without visibly changing the law. Fails once the ladder
/// is exhausted.
pub fn cholesky_with_jitter(mat: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(chol) = Cholesky::new(mat.clone()) {
        return Ok(chol);
    }
    let mean_diag = mat.diagonal().mean();
    for eps in JITTER_LADDER {
        let mut jittered = mat.clone();
        let bump = eps * mean_diag.max(f64::MIN_POSITIVE);
        for i in 0..jittered.nrows() {
            jittered[(i, i)] += bump;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(chol);
        }
    }
    Err(Error::FactorizationFailed)
}

/// Strict Cholesky, no jitter. Errors with `NotPositiveDefinite`.
pub fn cholesky_strict(mat: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(mat.clone()).ok_or_else(|| {
        Error::NotPositiveDefinite(format!("{}x{} matrix", mat.nrows(), mat.ncols()))
    })
}

/// Force exact symmetry: (M + Mᵀ)/2.
pub fn symmetrize(mat: &mut DMatrix<f64>) {
    let n = mat.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (mat[(i, j)] + mat[(j, i)]);
            mat[(i, j)] = avg;
            mat[(j, i)] = avg;
        }
    }
}

/// Extract the submatrix with rows in `rows` and columns in `cols`.
pub fn submatrix(mat: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| mat[(rows[i], cols[j])])
}

/// Extract the subvector with entries in `idx`.
pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(cholesky_strict(mat)?.inverse())
}

/// Condition number estimate from the singular values.
pub fn condition_number(mat: &DMatrix<f64>) -> f64 {
    let svd = mat.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
