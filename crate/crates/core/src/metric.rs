//! Metric operator from the double series
//!
//! ```text
//! Θ = Σ_{λλ'} W†|λ⟩⟩ κ*_λ M_{λλ'} κ_λ' ⟨⟨λ'|W,   M = S⁻¹,   S_{λλ'} = ⟨⟨λ|W²|λ'⟩
//! ```
//!
//! and the diagnostics that decide whether it is a valid metric:
//! quasi-Hermiticity of `H` and `W`, Hermiticity and positivity of `Θ`, and
//! Hermiticity of the pulled-back operators `h = ΩHΩ⁻¹`, `w = ΩWΩ⁻¹`.
//!
//! Nothing is symmetrized behind the caller's back. When the weight is not
//! the identity the residuals can be large, and they are reported as such.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discrete::OperatorPair;
use crate::linalg::{self, CMat, LinalgError};
use crate::spectra::Eigensystem;
use crate::c64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("S is ill conditioned (cond = {0:e})")]
    IllConditionedS(f64),
    #[error("theta is singular")]
    SingularTheta,
    #[error("theta is not positive definite (min eigenvalue {0:e})")]
    NonPositiveTheta(f64),
    #[error("kappa has {got} entries for {modes} modes")]
    KappaLength { got: usize, modes: usize },
    #[error("linear algebra: {0}")]
    Linalg(#[from] LinalgError),
}

/// Condition number of `S` above which [`build_metric`] refuses to invert.
pub const S_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(rename = "quasiH")]
    pub quasi_h: f64,
    #[serde(rename = "quasiW")]
    pub quasi_w: f64,
    pub hermiticity: f64,
    pub min_eig: f64,
    #[serde(rename = "cond_S")]
    pub cond_s: f64,
    #[serde(rename = "cond_Theta")]
    pub cond_theta: f64,
}

#[derive(Debug, Clone)]
pub struct MetricResult {
    pub s: CMat,
    pub m: CMat,
    pub theta: CMat,
    pub kappa_used: Vec<Complex64>,
    pub cond_s: f64,
    /// Fewer modes than the grid dimension: `Θ` only acts as a metric on the
    /// retained span.
    pub incomplete_basis: bool,
}

/// `S_{λλ'} = ⟨⟨λ|W²|λ'⟩`
pub fn build_s(es: &Eigensystem, w: &[Complex64]) -> CMat {
    let w2: Vec<Complex64> = w.iter().map(|x| x * x).collect();
    es.left.adjoint() * linalg::scale_rows(&w2, es.right.as_ref())
}

pub fn build_metric(es: &Eigensystem, w: &[Complex64], kappa: &[Complex64]) -> Result<MetricResult, MetricError> {
    if kappa.len() != es.modes() {
        return Err(MetricError::KappaLength {
            got: kappa.len(),
            modes: es.modes(),
        });
    }
    let s = build_s(es, w);
    let cond_s = linalg::condition_number(s.as_ref())?;
    if !(cond_s <= S_CONDITION_LIMIT) {
        return Err(MetricError::IllConditionedS(cond_s));
    }
    let m = linalg::inverse(s.as_ref())?;
    // B = W†U has columns W†|λ⟩⟩, so Θ = B K* M K B†.
    let wc: Vec<Complex64> = w.iter().map(|x| x.conj()).collect();
    let b = linalg::scale_rows(&wc, es.left.as_ref());
    let kc: Vec<Complex64> = kappa.iter().map(|k| k.conj()).collect();
    let core = linalg::scale_cols(linalg::scale_rows(&kc, m.as_ref()).as_ref(), kappa);
    let theta = &b * &core * b.adjoint();
    Ok(MetricResult {
        s,
        m,
        theta,
        kappa_used: kappa.to_vec(),
        cond_s,
        incomplete_basis: !es.is_complete(),
    })
}

/// `Σ_λ |λ⟩⟩ σ_λ⁻¹ ⟨⟨λ|`, the metric of the `W = I` theory.
pub fn single_series_metric(es: &Eigensystem) -> CMat {
    let inv: Vec<Complex64> = es.sigmas.iter().map(|s| 1.0 / s).collect();
    linalg::scale_cols(es.left.as_ref(), &inv) * es.left.adjoint()
}

/// `‖M S - I‖_F / ‖I‖_F`
pub fn ms_residual(result: &MetricResult) -> f64 {
    let mut p = &result.m * &result.s;
    let n = p.nrows();
    for i in 0..n {
        p[(i, i)] -= c64(1.0, 0.0);
    }
    linalg::frobenius(p.as_ref()) / (n as f64).sqrt()
}

/// Largest entry of `⟨λ|ΘW|λ'⟩ - δ_{λλ'}`.
pub fn theta_w_identity_residual(es: &Eigensystem, theta: &CMat, w: &[Complex64]) -> f64 {
    let g = es.right.adjoint() * theta * linalg::scale_rows(w, es.right.as_ref());
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { c64(1.0, 0.0) } else { c64(0.0, 0.0) };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

/// Off-diagonal over diagonal Frobenius mass.
pub fn offdiag_ratio(m: &CMat) -> f64 {
    let (mut off, mut on) = (0.0, 0.0);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i == j {
                on += m[(i, j)].norm_sqr();
            } else {
                off += m[(i, j)].norm_sqr();
            }
        }
    }
    (off / on).sqrt()
}

/// `‖A†Θ - ΘA‖_F / (‖Θ‖_F ‖A‖_F)`
pub fn quasi_hermiticity(theta: &CMat, a: &CMat) -> f64 {
    let lhs = a.adjoint() * theta;
    let rhs = theta * a;
    let diff = lhs - rhs;
    linalg::frobenius(diff.as_ref()) / (linalg::frobenius(theta.as_ref()) * linalg::frobenius(a.as_ref()))
}

pub fn quasi_hermiticity_residuals(theta: &CMat, pair: &OperatorPair) -> Result<(f64, f64), MetricError> {
    if !linalg::condition_number(theta.as_ref())?.is_finite() {
        return Err(MetricError::SingularTheta);
    }
    Ok((
        quasi_hermiticity(theta, &pair.h),
        quasi_hermiticity(theta, &pair.w_matrix()),
    ))
}

/// `(‖Θ - Θ†‖/‖Θ‖, min eig of (Θ + Θ†)/2)`. Reports, never asserts.
pub fn positivity_report(theta: &CMat) -> Result<(f64, f64), MetricError> {
    Ok((
        linalg::hermiticity_residual(theta.as_ref()),
        linalg::min_hermitian_eigenvalue(theta.as_ref())?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaProbe {
    /// `‖Θ₁ - Θ₂‖_F / ‖Θ₁‖_F`
    pub relative_difference: f64,
    pub quasi_h: (f64, f64),
    pub quasi_w: (f64, f64),
}

pub fn kappa_dependence_probe(
    es: &Eigensystem,
    pair: &OperatorPair,
    kappa1: &[Complex64],
    kappa2: &[Complex64],
) -> Result<KappaProbe, MetricError> {
    let t1 = build_metric(es, &pair.w, kappa1)?.theta;
    let t2 = build_metric(es, &pair.w, kappa2)?.theta;
    let (h1, w1) = quasi_hermiticity_residuals(&t1, pair)?;
    let (h2, w2) = quasi_hermiticity_residuals(&t2, pair)?;
    let diff = &t1 - &t2;
    Ok(KappaProbe {
        relative_difference: linalg::frobenius(diff.as_ref()) / linalg::frobenius(t1.as_ref()),
        quasi_h: (h1, h2),
        quasi_w: (w1, w2),
    })
}

/// Hermiticity residuals of `h = ΩHΩ⁻¹` and `w = ΩWΩ⁻¹` with `Ω = Θ^{1/2}`.
///
/// Any factor with `Ω†Ω = Θ` gives the same answer up to a unitary, so the
/// Hermitian root is used.
pub fn physical_operators(pair: &OperatorPair, theta: &CMat) -> Result<(f64, f64), MetricError> {
    let (omega, omega_inv) = match linalg::hermitian_sqrt(theta.as_ref())? {
        Some(pair) => pair,
        None => {
            return Err(MetricError::NonPositiveTheta(linalg::min_hermitian_eigenvalue(
                theta.as_ref(),
            )?))
        }
    };
    let h = &omega * &pair.h * &omega_inv;
    let w = &omega * pair.w_matrix() * &omega_inv;
    Ok((
        linalg::hermiticity_residual(h.as_ref()),
        linalg::hermiticity_residual(w.as_ref()),
    ))
}

/// `ψ† Θ φ`
pub fn physical_inner_product(psi: &[Complex64], phi: &[Complex64], theta: &CMat) -> Complex64 {
    let n = phi.len();
    let col = Mat::from_fn(n, 1, |i, _| phi[i]);
    let t_phi = theta * col;
    psi.iter().enumerate().map(|(i, p)| p.conj() * t_phi[(i, 0)]).sum()
}

pub fn diagnostics(result: &MetricResult, pair: &OperatorPair) -> Result<Diagnostics, MetricError> {
    let (quasi_h, quasi_w) = quasi_hermiticity_residuals(&result.theta, pair)?;
    let (hermiticity, min_eig) = positivity_report(&result.theta)?;
    Ok(Diagnostics {
        quasi_h,
        quasi_w,
        hermiticity,
        min_eig,
        cond_s: result.cond_s,
        cond_theta: linalg::condition_number(result.theta.as_ref())?,
    })
}
