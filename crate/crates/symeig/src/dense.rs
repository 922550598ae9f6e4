//! Small dense symmetric eigensolvers used by oracle/verification paths.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Ascending eigenvalues and matching eigenvector columns of a symmetric
/// matrix.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let se = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &k) in order.iter().enumerate() {
        vecs.set_column(c, &se.eigenvectors.column(k));
    }
    (vals, vecs)
}

/// Generalized symmetric pencil `A x = lambda B x` with `B` positive
/// definite, reduced through the Cholesky factor of `B`. Eigenvectors are
/// returned B-orthonormal.
pub fn generalized_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "pencil orders {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let chol = b.clone().cholesky().ok_or(Error::IndefiniteMass)?;
    let l = chol.l();
    // M = L^-1 A L^-T, built in two triangular solves.
    let mut m = a.clone();
    let _ = l.solve_lower_triangular_mut(&mut m);
    let mut mt = m.transpose();
    let _ = l.solve_lower_triangular_mut(&mut mt);
    // Symmetrize against roundoff.
    let sym = (&mt + mt.transpose()) * 0.5;
    let (vals, ys) = sym_eigen(&sym);
    let mut xs = ys;
    let _ = l.transpose().solve_upper_triangular_mut(&mut xs);
    Ok((vals, xs))
}

/// Ascending eigenvalues of a standard or generalized sparse pencil, via
/// dense conversion. Oracle path for modest sizes.
pub fn dense_spectrum(
    a: &crate::sparse::SparseSym,
    b: &crate::sparse::SparseSym,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if b.is_identity() {
        Ok(sym_eigen(&a.to_dense()))
    } else {
        generalized_eigen(&a.to_dense(), &b.to_dense())
    }
}
