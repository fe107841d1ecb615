//! Small dense complex linear-algebra helpers with deterministic ordering.

use nalgebra::{SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::netgen::CMat;

/// Eigenvalues (ascending, ties by index) and matching eigenvectors of the
/// Hermitian part of `m`.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (values, vectors)
}

/// Orthonormal eigenvectors of the `count` smallest eigenvalues.
pub fn least_eigenvectors(m: &CMat, count: usize) -> CMat {
    let (_, vectors) = hermitian_eigen(m);
    vectors.columns(0, count).into_owned()
}

/// `dim` orthonormal vectors `x` with `bᴴx ≈ 0`.
///
/// Taken from the full left singular basis of `b` (zero-padded to at least
/// square). Fails when the `dim`-th smallest singular value exceeds
/// `rel_tol` times the largest.
pub fn left_null_space(b: &CMat, dim: usize, rel_tol: f64) -> Result<CMat> {
    let rows = b.nrows();
    if dim > rows {
        return Err(Error::DegenerateChannel(format!(
            "asked for {dim} null directions in dimension {rows}"
        )));
    }
    let cols = b.ncols().max(rows);
    let mut padded = CMat::zeros(rows, cols);
    padded.view_mut((0, 0), (rows, b.ncols())).copy_from(b);
    let svd = SVD::try_new(padded, true, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let u = svd.u.expect("left vectors requested");
    let s = svd.singular_values;
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &c| s[a].total_cmp(&s[c]).then(a.cmp(&c)));
    let largest = s.iter().cloned().fold(0.0, f64::max);
    if dim > 0 {
        let edge = s[idx[dim - 1]];
        if largest > 0.0 && edge > rel_tol * largest {
            return Err(Error::DegenerateChannel(format!(
                "{rows}x{} matrix leaves fewer than {dim} null directions (singular value ratio {:.3e})",
                b.ncols(),
                edge / largest
            )));
        }
    }
    Ok(CMat::from_fn(rows, dim, |r, c| u[(r, idx[c])]))
}

/// Columns side by side; all blocks must share a row count.
pub fn hstack(rows: usize, blocks: &[&CMat]) -> CMat {
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// `a⁻¹ b` for Hermitian positive definite `a`.
pub fn hpd_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("covariance is not positive definite".into()))?;
    Ok(chol.solve(b))
}
