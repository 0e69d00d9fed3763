//! Thin helpers over faer's dense complex kernels.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::c64;

pub type CMat = Mat<Complex64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("eigendecomposition did not converge")]
    EigenNoConvergence,
    #[error("singular value decomposition did not converge")]
    SvdNoConvergence,
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

pub fn frobenius(m: MatRef<'_, Complex64>) -> f64 {
    m.norm_l2()
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { c64(1.0, 0.0) } else { c64(0.0, 0.0) })
}

pub fn diag(d: &[Complex64]) -> CMat {
    Mat::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { c64(0.0, 0.0) })
}

/// `diag(d) * m`
pub fn scale_rows(d: &[Complex64], m: MatRef<'_, Complex64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)])
}

/// `m * diag(d)`
pub fn scale_cols(m: MatRef<'_, Complex64>, d: &[Complex64]) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[j])
}

pub fn adjoint(m: MatRef<'_, Complex64>) -> CMat {
    m.adjoint().to_owned()
}

pub fn hermitian_part(m: MatRef<'_, Complex64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        (m[(i, j)] + m[(j, i)].conj()) * 0.5
    })
}

/// `‖A - A†‖_F / ‖A‖_F`, zero for the zero matrix.
pub fn hermiticity_residual(m: MatRef<'_, Complex64>) -> f64 {
    let norm = frobenius(m);
    if norm == 0.0 {
        return 0.0;
    }
    let diff = Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - m[(j, i)].conj());
    frobenius(diff.as_ref()) / norm
}

pub fn eig(m: MatRef<'_, Complex64>) -> Result<(Vec<Complex64>, CMat), LinalgError> {
    check_square(m)?;
    let evd = m.eigen().map_err(|_| LinalgError::EigenNoConvergence)?;
    let values = (0..m.nrows()).map(|i| evd.S()[i]).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn eigenvalues(m: MatRef<'_, Complex64>) -> Result<Vec<Complex64>, LinalgError> {
    check_square(m)?;
    m.eigenvalues().map_err(|_| LinalgError::EigenNoConvergence)
}

/// Eigenvalues (ascending) and eigenvectors of the Hermitian part of `m`.
pub fn hermitian_eig(m: MatRef<'_, Complex64>) -> Result<(Vec<f64>, CMat), LinalgError> {
    check_square(m)?;
    let herm = hermitian_part(m);
    let evd = herm
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| LinalgError::EigenNoConvergence)?;
    let values = (0..m.nrows()).map(|i| evd.S()[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn min_hermitian_eigenvalue(m: MatRef<'_, Complex64>) -> Result<f64, LinalgError> {
    check_square(m)?;
    let herm = hermitian_part(m);
    let values = herm
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| LinalgError::EigenNoConvergence)?;
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}

/// Nonincreasing singular values.
pub fn singular_values(m: MatRef<'_, Complex64>) -> Result<Vec<f64>, LinalgError> {
    m.singular_values().map_err(|_| LinalgError::SvdNoConvergence)
}

/// 2-norm condition number; infinite for a numerically singular matrix.
pub fn condition_number(m: MatRef<'_, Complex64>) -> Result<f64, LinalgError> {
    let s = singular_values(m)?;
    match (s.first(), s.last()) {
        (Some(&max), Some(&min)) if min > 0.0 => Ok(max / min),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

/// Inverse through LU with full pivoting.
pub fn inverse(m: MatRef<'_, Complex64>) -> Result<CMat, LinalgError> {
    check_square(m)?;
    Ok(m.full_piv_lu().inverse())
}

/// Principal square root of a Hermitian positive definite matrix and its
/// inverse, built from the eigendecomposition of the Hermitian part.
/// Returns `None` when an eigenvalue is not strictly positive.
pub fn hermitian_sqrt(m: MatRef<'_, Complex64>) -> Result<Option<(CMat, CMat)>, LinalgError> {
    let (values, vectors) = hermitian_eig(m)?;
    if values.iter().any(|&v| v <= 0.0) {
        return Ok(None);
    }
    let roots: Vec<Complex64> = values.iter().map(|v| c64(v.sqrt(), 0.0)).collect();
    let inv_roots: Vec<Complex64> = values.iter().map(|v| c64(1.0 / v.sqrt(), 0.0)).collect();
    let vh = vectors.adjoint();
    let sqrt = scale_cols(vectors.as_ref(), &roots) * vh;
    let inv = scale_cols(vectors.as_ref(), &inv_roots) * vh;
    Ok(Some((sqrt, inv)))
}

pub fn column(m: MatRef<'_, Complex64>, j: usize) -> Vec<Complex64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `a† b`
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn check_square(m: MatRef<'_, Complex64>) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}
