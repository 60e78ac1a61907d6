//! Thin wrappers over faer for the dense symmetric work in this crate.
//!
//! All calls run sequentially inside faer; parallelism lives at the path
//! level, so floating-point summation order never depends on the pool size.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues non-increasing.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Mat<f64>,
}

fn sequential() {
    faer::set_global_parallelism(Par::Seq);
}

fn eigen_failure(a: MatRef<'_, f64>) -> Error {
    let n = a.nrows();
    let trace = (0..n).map(|i| a[(i, i)]).sum();
    let mut max_abs = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            max_abs = max_abs.max(a[(i, j)].abs());
        }
    }
    Error::Eigen {
        size: n,
        trace,
        max_abs,
    }
}

pub fn sym_eigen(a: MatRef<'_, f64>) -> Result<SymEigen> {
    sequential();
    let n = a.nrows();
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|_| eigen_failure(a))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order
    let values: Vec<f64> = (0..n).rev().map(|k| s[k]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(eigen_failure(a));
    }
    let vectors = Mat::from_fn(n, n, |i, k| u[(i, n - 1 - k)]);
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues only, non-increasing.
pub fn sym_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    sequential();
    let mut v = a.self_adjoint_eigenvalues(Side::Lower).map_err(|_| eigen_failure(a))?;
    v.reverse();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(eigen_failure(a));
    }
    Ok(v)
}

/// `dst = lhs * rhs`, single-threaded.
pub fn mul(lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(lhs.nrows(), rhs.ncols());
    matmul(&mut out, Accum::Replace, lhs, rhs, 1.0, Par::Seq);
    out
}

/// Lower Cholesky factor of a dense symmetric matrix stored row-major.
///
/// Returns the factor row-major. A pivot that is not strictly positive
/// aborts with its index so callers can decide whether to regularize.
pub fn cholesky_lower(a: &[f64], n: usize) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NonPositivePivot { index: j, value: d });
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}
