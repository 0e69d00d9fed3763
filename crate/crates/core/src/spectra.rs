//! Right kets and left double-kets of the generalized problem `H ψ = λ W ψ`.
//!
//! Right kets come from the eigendecomposition of `W⁻¹H`, left double-kets
//! from an independent decomposition of `(H W⁻¹)† = W^{-†} H†`, whose
//! eigenvalues are the conjugates. The two families are paired by nearest
//! eigenvalue. Only the double-kets are rescaled when normalizing to
//! `⟨⟨λ|W|λ⟩ = 1`.

use faer::Mat;
use num_complex::Complex64;

use crate::discrete::{apply_parity, OperatorPair};
use crate::linalg::{self, column, dot, vec_norm, CMat, LinalgError};
use crate::c64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectraError {
    #[error("eigenvalues {a} and {b} coincide within the pairing tolerance")]
    DegeneratePairing { a: Complex64, b: Complex64 },
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("no eigenvalue passed the reality filter")]
    EmptySpectrum,
    #[error("mode {index} is self-orthogonal (|sigma| = {sigma:e})")]
    SelfOrthogonalMode { index: usize, sigma: f64 },
    #[error("residual needs the full basis, have {modes} of {dim} modes")]
    IncompleteBasis { modes: usize, dim: usize },
    #[error("kappa entry {0} vanishes")]
    ZeroKappa(usize),
    #[error("kappa has {got} entries for {modes} modes")]
    KappaLength { got: usize, modes: usize },
    #[error("parity overlap of mode {index} vanishes ({overlap:e})")]
    VanishingParityOverlap { index: usize, overlap: f64 },
}

impl From<LinalgError> for SpectraError {
    fn from(e: LinalgError) -> Self {
        SpectraError::SolverFailure(e.to_string())
    }
}

/// Eigenvalues with paired right kets and left double-kets, stored as
/// columns. `left` column `j` is the vector whose adjoint is `⟨⟨λ_j|`.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub lambdas: Vec<Complex64>,
    pub right: CMat,
    pub left: CMat,
    pub sigmas: Vec<Complex64>,
    pub kappa: Vec<Complex64>,
    pub residual_right: Vec<f64>,
    pub residual_left: Vec<f64>,
    /// Dimension of the underlying matrices.
    pub dim: usize,
    /// Modes dropped by [`filter_real`].
    pub discarded: usize,
}

impl Eigensystem {
    pub fn modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_complete(&self) -> bool {
        self.modes() == self.dim
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_right
            .iter()
            .chain(&self.residual_left)
            .fold(0.0, |a, &b| a.max(b))
    }

    /// The modes at positions `keep`, in that order.
    pub fn select(&self, keep: &[usize]) -> Eigensystem {
        let n = self.dim;
        Eigensystem {
            lambdas: keep.iter().map(|&k| self.lambdas[k]).collect(),
            right: Mat::from_fn(n, keep.len(), |i, j| self.right[(i, keep[j])]),
            left: Mat::from_fn(n, keep.len(), |i, j| self.left[(i, keep[j])]),
            sigmas: keep.iter().map(|&k| self.sigmas[k]).collect(),
            kappa: keep.iter().map(|&k| self.kappa[k]).collect(),
            residual_right: keep.iter().map(|&k| self.residual_right[k]).collect(),
            residual_left: keep.iter().map(|&k| self.residual_left[k]).collect(),
            dim: self.dim,
            discarded: self.discarded,
        }
    }
}

/// `W⁻¹ H`
fn reduced(pair: &OperatorPair) -> CMat {
    let inv: Vec<Complex64> = pair.w.iter().map(|w| 1.0 / w).collect();
    linalg::scale_rows(&inv, pair.h.as_ref())
}

/// Eigenvalues only, ascending by real part.
pub fn eigenvalues_only(pair: &OperatorPair) -> Result<Vec<Complex64>, SpectraError> {
    let mut values = linalg::eigenvalues(reduced(pair).as_ref())?;
    sort_by_re(&mut values);
    Ok(values)
}

/// Polishes one eigenvalue near `guess` by Rayleigh-quotient iteration,
/// without forming a dense factorization.
///
/// The assembled `H` is tridiagonal and complex symmetric (`Hᵀ = H`) and `W`
/// is diagonal, so the left eigenvector of the transposed problem equals the
/// right one and `λ ≈ vᵀHv / vᵀWv` is stationary. Each step costs `O(n)`.
/// The first few sweeps keep the shift pinned at `guess` so the vector locks
/// onto the nearest mode before the shift is allowed to move; unpinned RQI
/// from an arbitrary start vector can wander to a neighbouring level.
/// Stops once successive estimates agree to `tol` relative, or once the
/// updates have reached the rounding floor (below `1e-9` relative and no
/// longer shrinking).
pub fn refine_eigenvalue(pair: &OperatorPair, guess: Complex64, tol: f64) -> Result<Complex64, SpectraError> {
    const MAX_ITER: usize = 50;
    const PINNED: usize = 3;
    let n = pair.n();
    let diag: Vec<Complex64> = (0..n).map(|i| pair.h[(i, i)]).collect();
    let off: Vec<Complex64> = (1..n).map(|i| pair.h[(i, i - 1)]).collect();
    let mut v: Vec<Complex64> = (0..n).map(|i| c64(1.0 + (i % 7) as f64 * 0.1, 0.0)).collect();
    let mut mu = guess;
    let mut last_step = f64::INFINITY;
    for iter in 0..MAX_ITER {
        let rhs: Vec<Complex64> = v.iter().zip(&pair.w).map(|(x, w)| x * w).collect();
        let shifted: Vec<Complex64> = diag.iter().zip(&pair.w).map(|(d, w)| d - mu * w).collect();
        let y = solve_symmetric_tridiagonal(&shifted, &off, &rhs);
        let scale = vec_norm(&y);
        if !scale.is_finite() || scale == 0.0 {
            return Err(SpectraError::SolverFailure(format!("inverse iteration broke down at {mu}")));
        }
        v = y.into_iter().map(|x| x / scale).collect();
        let mut num = c64(0.0, 0.0);
        let mut den = c64(0.0, 0.0);
        for i in 0..n {
            let mut hv = diag[i] * v[i];
            if i > 0 {
                hv += off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                hv += off[i] * v[i + 1];
            }
            num += v[i] * hv;
            den += v[i] * pair.w[i] * v[i];
        }
        let next = num / den;
        if iter < PINNED {
            continue;
        }
        let scale = next.norm().max(1.0);
        let step = (next - mu).norm();
        let done = step <= tol * scale || (step >= last_step && step <= 1e-9 * scale);
        last_step = step;
        mu = next;
        if done {
            return Ok(mu);
        }
    }
    Err(SpectraError::SolverFailure(format!("refinement from {guess} did not settle")))
}

/// Thomas algorithm for a symmetric tridiagonal system. An exactly zero pivot
/// (the shift hit an eigenvalue) is nudged, which is harmless for inverse
/// iteration.
fn solve_symmetric_tridiagonal(diag: &[Complex64], off: &[Complex64], rhs: &[Complex64]) -> Vec<Complex64> {
    let n = diag.len();
    let mut c = vec![c64(0.0, 0.0); n];
    let mut d = vec![c64(0.0, 0.0); n];
    for i in 0..n {
        let lower = if i > 0 { off[i - 1] } else { c64(0.0, 0.0) };
        let mut pivot = diag[i] - if i > 0 { lower * c[i - 1] } else { c64(0.0, 0.0) };
        if pivot.norm() == 0.0 {
            pivot = c64(f64::EPSILON * diag[i].norm().max(1.0), 0.0);
        }
        if i + 1 < n {
            c[i] = off[i] / pivot;
        }
        d[i] = (rhs[i] - if i > 0 { lower * d[i - 1] } else { c64(0.0, 0.0) }) / pivot;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        let next = d[i + 1];
        d[i] -= c[i] * next;
    }
    d
}

fn sort_by_re(values: &mut [Complex64]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * 1f64.max(a.norm()).max(b.norm())
}

/// Solves for all `n` modes with paired right and left vectors, sorted by
/// ascending real part. `tol` is the relative pairing tolerance.
pub fn solve_generalized(pair: &OperatorPair, tol: f64) -> Result<Eigensystem, SpectraError> {
    let n = pair.n();
    let a = reduced(pair);
    let (lambdas, right) = linalg::eig(a.as_ref())?;
    let inv: Vec<Complex64> = pair.w.iter().map(|w| 1.0 / w).collect();
    let b = linalg::adjoint(linalg::scale_cols(pair.h.as_ref(), &inv).as_ref());
    let (mus, left) = linalg::eig(b.as_ref())?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        lambdas[i]
            .re
            .total_cmp(&lambdas[j].re)
            .then(lambdas[i].im.total_cmp(&lambdas[j].im))
    });
    for w in order.windows(2) {
        let (x, y) = (lambdas[w[0]], lambdas[w[1]]);
        if close(x, y, tol) {
            return Err(SpectraError::DegeneratePairing { a: x, b: y });
        }
    }
    // Any coincidence that the sort order hides (equal real parts far apart
    // in the list) is caught by requiring the nearest-neighbour map to be a
    // bijection.
    let targets: Vec<Complex64> = mus.iter().map(|m| m.conj()).collect();
    let mut partner = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for &i in &order {
        let (k, _) = targets
            .iter()
            .enumerate()
            .map(|(k, t)| (k, (t - lambdas[i]).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .ok_or_else(|| SpectraError::SolverFailure("empty spectrum".into()))?;
        if taken[k] {
            return Err(SpectraError::DegeneratePairing {
                a: lambdas[i],
                b: targets[k],
            });
        }
        taken[k] = true;
        partner[i] = k;
    }

    let right = Mat::from_fn(n, n, |r, c| right[(r, order[c])]);
    let left = Mat::from_fn(n, n, |r, c| left[(r, partner[order[c]])]);
    let lambdas: Vec<Complex64> = order.iter().map(|&i| lambdas[i]).collect();
    let mut es = Eigensystem {
        sigmas: vec![c64(0.0, 0.0); n],
        kappa: vec![c64(1.0, 0.0); n],
        residual_right: vec![0.0; n],
        residual_left: vec![0.0; n],
        lambdas,
        right,
        left,
        dim: n,
        discarded: 0,
    };
    refresh(&mut es, pair);
    Ok(es)
}

/// Recomputes σ and the per-mode residuals.
fn refresh(es: &mut Eigensystem, pair: &OperatorPair) {
    let hv = &pair.h * &es.right;
    let hu = pair.h.adjoint() * &es.left;
    for j in 0..es.modes() {
        let lam = es.lambdas[j];
        let v = column(es.right.as_ref(), j);
        let u = column(es.left.as_ref(), j);
        let wv: Vec<Complex64> = v.iter().zip(&pair.w).map(|(x, w)| w * x).collect();
        let wu: Vec<Complex64> = u.iter().zip(&pair.w).map(|(x, w)| w.conj() * x).collect();
        let rr: Vec<Complex64> = (0..es.dim).map(|i| hv[(i, j)] - lam * wv[i]).collect();
        let rl: Vec<Complex64> = (0..es.dim).map(|i| hu[(i, j)] - lam.conj() * wu[i]).collect();
        es.residual_right[j] = vec_norm(&rr) / vec_norm(&wv);
        es.residual_left[j] = vec_norm(&rl) / vec_norm(&wu);
        es.sigmas[j] = dot(&u, &wv);
    }
}

/// Keeps modes with `|Im λ| < tol_im · max(1, |Re λ|)`.
pub fn filter_real(es: &Eigensystem, tol_im: f64) -> Result<Eigensystem, SpectraError> {
    let keep: Vec<usize> = (0..es.modes())
        .filter(|&k| es.lambdas[k].im.abs() < tol_im * es.lambdas[k].re.abs().max(1.0))
        .collect();
    if keep.is_empty() {
        return Err(SpectraError::EmptySpectrum);
    }
    let mut out = es.select(&keep);
    out.discarded = es.discarded + (es.modes() - keep.len());
    Ok(out)
}

/// Same rule applied to bare eigenvalues.
pub fn real_eigenvalues(values: &[Complex64], tol_im: f64) -> Vec<f64> {
    let mut out: Vec<f64> = values
        .iter()
        .filter(|l| l.im.abs() < tol_im * l.re.abs().max(1.0))
        .map(|l| l.re)
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// `|σ|` below this fraction of `‖u‖‖Wv‖` marks a self-orthogonal mode.
pub const SELF_ORTHOGONAL_THRESHOLD: f64 = 1e-10;

/// Rescales the double-kets so that `σ_λ = 1`.
pub fn normalize_biorthogonal(es: &Eigensystem, w: &[Complex64]) -> Result<Eigensystem, SpectraError> {
    let mut out = es.clone();
    for j in 0..es.modes() {
        let v = column(es.right.as_ref(), j);
        let u = column(es.left.as_ref(), j);
        let wv: Vec<Complex64> = v.iter().zip(w).map(|(x, w)| w * x).collect();
        let sigma = dot(&u, &wv);
        let scale = vec_norm(&u) * vec_norm(&wv);
        if !(sigma.norm() > SELF_ORTHOGONAL_THRESHOLD * scale) {
            return Err(SpectraError::SelfOrthogonalMode {
                index: j,
                sigma: sigma.norm() / scale,
            });
        }
        let f = 1.0 / sigma.conj();
        for i in 0..es.dim {
            out.left[(i, j)] *= f;
        }
        out.sigmas[j] = dot(&column(out.left.as_ref(), j), &wv);
    }
    Ok(out)
}

/// `G_{λλ'} = ⟨⟨λ|W|λ'⟩`
pub fn gram(es: &Eigensystem, w: &[Complex64]) -> CMat {
    let wv = linalg::scale_rows(w, es.right.as_ref());
    es.left.adjoint() * wv
}

/// Largest `|G_{λλ'}|` with `λ ≠ λ'`.
pub fn gram_offdiag_max(g: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if i != j {
                worst = worst.max(g[(i, j)].norm());
            }
        }
    }
    worst
}

fn require_full(es: &Eigensystem) -> Result<(), SpectraError> {
    if es.is_complete() {
        Ok(())
    } else {
        Err(SpectraError::IncompleteBasis {
            modes: es.modes(),
            dim: es.dim,
        })
    }
}

/// `‖Σ_λ |λ⟩ σ_λ⁻¹ ⟨⟨λ|W - I‖_F / √n`
pub fn completeness_residual(es: &Eigensystem, w: &[Complex64]) -> Result<f64, SpectraError> {
    require_full(es)?;
    let inv: Vec<Complex64> = es.sigmas.iter().map(|s| 1.0 / s).collect();
    let uw = linalg::scale_cols(linalg::adjoint(es.left.as_ref()).as_ref(), w);
    let mut sum = linalg::scale_cols(es.right.as_ref(), &inv) * uw;
    for i in 0..es.dim {
        sum[(i, i)] -= c64(1.0, 0.0);
    }
    Ok(linalg::frobenius(sum.as_ref()) / (es.dim as f64).sqrt())
}

/// `‖Σ_λ W|λ⟩ (λ/σ_λ) ⟨⟨λ|W - H‖_F / ‖H‖_F`
pub fn spectral_rebuild_residual(es: &Eigensystem, pair: &OperatorPair) -> Result<f64, SpectraError> {
    require_full(es)?;
    let coef: Vec<Complex64> = es.lambdas.iter().zip(&es.sigmas).map(|(l, s)| l / s).collect();
    let wv = linalg::scale_rows(&pair.w, es.right.as_ref());
    let uw = linalg::scale_cols(linalg::adjoint(es.left.as_ref()).as_ref(), &pair.w);
    let rebuilt = linalg::scale_cols(wv.as_ref(), &coef) * uw;
    let diff = rebuilt - &pair.h;
    Ok(linalg::frobenius(diff.as_ref()) / linalg::frobenius(pair.h.as_ref()))
}

/// `|λ⟩ -> |λ⟩/κ_λ`, `⟨⟨λ| -> κ_λ ⟨⟨λ|`. σ is unchanged; the accumulated
/// rescaling is kept in `kappa`.
pub fn apply_kappa(es: &Eigensystem, kappa: &[Complex64]) -> Result<Eigensystem, SpectraError> {
    if kappa.len() != es.modes() {
        return Err(SpectraError::KappaLength {
            got: kappa.len(),
            modes: es.modes(),
        });
    }
    if let Some(k) = kappa.iter().position(|k| *k == c64(0.0, 0.0)) {
        return Err(SpectraError::ZeroKappa(k));
    }
    let inv: Vec<Complex64> = kappa.iter().map(|k| 1.0 / k).collect();
    let conj: Vec<Complex64> = kappa.iter().map(|k| k.conj()).collect();
    let mut out = es.clone();
    out.right = linalg::scale_cols(es.right.as_ref(), &inv);
    out.left = linalg::scale_cols(es.left.as_ref(), &conj);
    out.kappa = es.kappa.iter().zip(kappa).map(|(a, b)| a * b).collect();
    Ok(out)
}

/// Double-kets built from parity: `P|n⟩ Q_n`.
#[derive(Debug, Clone)]
pub struct QuasiParity {
    pub kets: CMat,
    /// `Q_n = 1/⟨n|PW|n⟩`, which reduces to `1/⟨n|P|n⟩` for `W = I`.
    pub q: Vec<Complex64>,
    /// Angle (radians) between `P|n⟩` and the solved double-ket.
    pub angles: Vec<f64>,
}

/// `|⟨n|PW|n⟩|` below this fraction of `‖v‖‖Wv‖` is treated as zero.
pub const PARITY_OVERLAP_THRESHOLD: f64 = 1e-12;

/// Uses `PHP = H†`, `PWP = W†`: for real `λ` the reflected right ket `P|λ⟩`
/// is a left eigenvector, so the double-ket is `P|λ⟩ Q` with `Q` fixed by
/// `σ = 1`.
pub fn quasiparity_leftkets(es: &Eigensystem, w: &[Complex64]) -> Result<QuasiParity, SpectraError> {
    let m = es.modes();
    let mut kets = Mat::zeros(es.dim, m);
    let mut q = Vec::with_capacity(m);
    let mut angles = Vec::with_capacity(m);
    for j in 0..m {
        let v = column(es.right.as_ref(), j);
        let pv = apply_parity(&v);
        let wv: Vec<Complex64> = v.iter().zip(w).map(|(x, w)| w * x).collect();
        let overlap = dot(&v, &apply_parity(&wv));
        if !(overlap.norm() > PARITY_OVERLAP_THRESHOLD * vec_norm(&v) * vec_norm(&wv)) {
            return Err(SpectraError::VanishingParityOverlap {
                index: j,
                overlap: overlap.norm(),
            });
        }
        let qn = 1.0 / overlap.conj();
        for i in 0..es.dim {
            kets[(i, j)] = pv[i] * qn;
        }
        q.push(qn);
        angles.push(angle_between(&pv, &column(es.left.as_ref(), j)));
    }
    Ok(QuasiParity { kets, q, angles })
}

/// Angle between the complex lines spanned by `a` and `b`, accurate for
/// small angles.
pub fn angle_between(a: &[Complex64], b: &[Complex64]) -> f64 {
    let na = vec_norm(a);
    let nb = vec_norm(b);
    if na == 0.0 || nb == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let c = dot(a, b) / (na * na);
    let perp: Vec<Complex64> = b.iter().zip(a).map(|(y, x)| y - c * x).collect();
    let s = vec_norm(&perp) / nb;
    let cos = (c.norm() * na / nb).min(1.0);
    s.atan2(cos)
}

/// Rows for the spectrum CSV: index, re_lambda, im_lambda, residual_right,
/// residual_left, sigma_re, sigma_im.
pub const SPECTRUM_COLUMNS: [&str; 7] = [
    "index",
    "re_lambda",
    "im_lambda",
    "residual_right",
    "residual_left",
    "sigma_re",
    "sigma_im",
];

pub fn spectrum_rows(es: &Eigensystem) -> Vec<Vec<String>> {
    use crate::io::fmt_f64;
    (0..es.modes())
        .map(|j| {
            vec![
                j.to_string(),
                fmt_f64(es.lambdas[j].re),
                fmt_f64(es.lambdas[j].im),
                fmt_f64(es.residual_right[j]),
                fmt_f64(es.residual_left[j]),
                fmt_f64(es.sigmas[j].re),
                fmt_f64(es.sigmas[j].im),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::GridSpec;

    fn pair_from(h: [[f64; 2]; 2], w: [f64; 2]) -> OperatorPair {
        OperatorPair {
            h: Mat::from_fn(2, 2, |i, j| c64(h[i][j], 0.0)),
            w: w.iter().map(|&x| c64(x, 0.0)).collect(),
            grid: GridSpec::new(1.0, 3, 0.0).unwrap(),
        }
    }

    fn close_vec(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() < tol)
    }

    /// Unit-free collinearity: `a ∥ b`.
    fn parallel(a: &[Complex64], b: &[Complex64]) -> bool {
        angle_between(a, b) < 1e-12
    }

    #[test]
    fn diagonal_case() {
        let pair = pair_from([[1.0, 0.0], [0.0, 2.0]], [1.0, 1.0]);
        let es = normalize_biorthogonal(&solve_generalized(&pair, 1e-10).unwrap(), &pair.w).unwrap();
        assert!(close_vec(&es.lambdas, &[c64(1.0, 0.0), c64(2.0, 0.0)], 1e-14));
        assert!(parallel(&column(es.right.as_ref(), 0), &[c64(1.0, 0.0), c64(0.0, 0.0)]));
        assert!(parallel(&column(es.left.as_ref(), 1), &[c64(0.0, 0.0), c64(1.0, 0.0)]));
        assert_eq!(completeness_residual(&es, &pair.w).unwrap(), 0.0);
        assert_eq!(spectral_rebuild_residual(&es, &pair).unwrap(), 0.0);
    }

    // Hand algebra: H = [[1,1],[0,2]] has right kets (1,0), (1,1) and left
    // double-kets (1,-1), (0,1); ⟨⟨1|2⟩ = 1 - 1 = 0 and ⟨⟨2|1⟩ = 0.
    #[test]
    fn upper_triangular_hand_example() {
        let pair = pair_from([[1.0, 1.0], [0.0, 2.0]], [1.0, 1.0]);
        let es = solve_generalized(&pair, 1e-10).unwrap();
        assert!(close_vec(&es.lambdas, &[c64(1.0, 0.0), c64(2.0, 0.0)], 1e-14));
        let one = c64(1.0, 0.0);
        let zero = c64(0.0, 0.0);
        assert!(parallel(&column(es.right.as_ref(), 0), &[one, zero]));
        assert!(parallel(&column(es.right.as_ref(), 1), &[one, one]));
        assert!(parallel(&column(es.left.as_ref(), 0), &[one, -one]));
        assert!(parallel(&column(es.left.as_ref(), 1), &[zero, one]));

        let es = normalize_biorthogonal(&es, &pair.w).unwrap();
        let g = gram(&es, &pair.w);
        assert!((g[(0, 0)] - one).norm() < 1e-15 && (g[(1, 1)] - one).norm() < 1e-15);
        assert!(gram_offdiag_max(&g) < 1e-15);
        assert!(completeness_residual(&es, &pair.w).unwrap() < 1e-15);
        assert!(spectral_rebuild_residual(&es, &pair).unwrap() < 1e-14);
    }

    #[test]
    fn diagonal_generalized() {
        let pair = pair_from([[2.0, 0.0], [0.0, 2.0]], [1.0, 2.0]);
        let es = solve_generalized(&pair, 1e-10).unwrap();
        assert!(close_vec(&es.lambdas, &[c64(1.0, 0.0), c64(2.0, 0.0)], 1e-14));
    }

    #[test]
    fn degenerate_spectrum_is_rejected() {
        let pair = pair_from([[3.0, 0.0], [0.0, 3.0]], [1.0, 1.0]);
        assert!(matches!(
            solve_generalized(&pair, 1e-10),
            Err(SpectraError::DegeneratePairing { .. })
        ));
    }

    #[test]
    fn filter_threshold() {
        let pair = OperatorPair {
            h: crate::linalg::diag(&[c64(3.0, 0.5), c64(1.0, 0.0), c64(2.0, 1e-12)]),
            w: vec![c64(1.0, 0.0); 3],
            grid: GridSpec::new(1.0, 3, 0.0).unwrap(),
        };
        let es = solve_generalized(&pair, 1e-10).unwrap();
        let kept = filter_real(&es, 1e-8).unwrap();
        assert_eq!(kept.modes(), 2);
        assert_eq!(kept.discarded, 1);
        assert_eq!(kept.lambdas[0], c64(1.0, 0.0));
        assert_eq!(kept.lambdas[1], c64(2.0, 1e-12));
        let all = filter_real(&kept, 1e-8).unwrap();
        assert_eq!(all.lambdas, kept.lambdas);
        let strict = filter_real(&es, 1e-13);
        assert_eq!(strict.unwrap().modes(), 1);
        let only_complex = OperatorPair {
            h: crate::linalg::diag(&[c64(3.0, 0.5), c64(1.0, 1.0)]),
            w: vec![c64(1.0, 0.0); 2],
            grid: GridSpec::new(1.0, 3, 0.0).unwrap(),
        };
        let es = solve_generalized(&only_complex, 1e-10).unwrap();
        assert_eq!(filter_real(&es, 1e-8).unwrap_err(), SpectraError::EmptySpectrum);
        assert!(completeness_residual(&kept, &pair.w).is_err());
    }

    #[test]
    fn kappa_rescaling() {
        let pair = pair_from([[1.0, 1.0], [0.5, 2.0]], [1.0, 3.0]);
        let es = normalize_biorthogonal(&solve_generalized(&pair, 1e-10).unwrap(), &pair.w).unwrap();
        let same = apply_kappa(&es, &[c64(1.0, 0.0); 2]).unwrap();
        assert_eq!(same.right, es.right);
        assert_eq!(same.left, es.left);
        let two = apply_kappa(&es, &[c64(2.0, 0.0); 2]).unwrap();
        assert_eq!(normalize_biorthogonal(&two, &pair.w).unwrap().sigmas, es.sigmas);
        assert_eq!(
            apply_kappa(&es, &[c64(1.0, 0.0), c64(0.0, 0.0)]).unwrap_err(),
            SpectraError::ZeroKappa(1)
        );
        assert!(apply_kappa(&es, &[c64(1.0, 0.0)]).is_err());
    }

    #[test]
    fn quasiparity_for_symmetric_hermitian() {
        // Symmetric real tridiagonal matrix commuting with the reversal.
        let n = 7;
        let h = Mat::from_fn(n, n, |i, j| {
            if i == j {
                c64(2.0 + ((i as f64) - 3.0).powi(2) * 0.3, 0.0)
            } else if i.abs_diff(j) == 1 {
                c64(-1.0, 0.0)
            } else {
                c64(0.0, 0.0)
            }
        });
        let pair = OperatorPair {
            h,
            w: vec![c64(1.0, 0.0); n],
            grid: GridSpec::new(4.0, n, 0.0).unwrap(),
        };
        let es = normalize_biorthogonal(&solve_generalized(&pair, 1e-10).unwrap(), &pair.w).unwrap();
        let qp = quasiparity_leftkets(&es, &pair.w).unwrap();
        assert!(qp.q[0].re > 0.0 && qp.q[0].im.abs() < 1e-12);
        for j in 0..n {
            assert!(qp.angles[j] < 1e-7, "mode {j}: {}", qp.angles[j]);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            assert!(qp.q[j].re * sign > 0.0, "mode {j}");
            let v = column(es.right.as_ref(), j);
            let direct = 1.0 / dot(&v, &apply_parity(&v));
            assert!((qp.q[j] - direct).norm() < 1e-12 * direct.norm());
        }
    }

    #[test]
    fn angles() {
        let a = [c64(1.0, 0.0), c64(0.0, 0.0)];
        let b = [c64(0.0, 2.0), c64(0.0, 0.0)];
        assert_eq!(angle_between(&a, &b), 0.0);
        let c = [c64(0.0, 0.0), c64(1.0, 0.0)];
        assert!((angle_between(&a, &c) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let d = [c64(1.0, 0.0), c64(1e-9, 0.0)];
        assert!((angle_between(&a, &d) - 1e-9).abs() < 1e-20);
    }

    #[test]
    fn refinement_agrees_with_dense_solver() {
        use crate::discrete::build_operators;
        use crate::model::{rectify_model, BranchConvention, ModelSpec};
        let spec = ModelSpec::cubic_toboggan(0.0, 0.0).unwrap();
        let model = rectify_model(&spec, 1, BranchConvention::default());
        let pair = build_operators(&model, &GridSpec::new(1.8, 200, 0.1).unwrap()).unwrap();
        let dense = eigenvalues_only(&pair).unwrap();
        // the low physical modes, not the large grid artifacts near r = 0
        let low: Vec<Complex64> = dense.iter().copied().filter(|l| l.re > 0.0 && l.norm() < 10.0).collect();
        assert!(low.len() >= 3, "{low:?}");
        for target in &low[..3] {
            let guess = target * 1.02;
            let polished = refine_eigenvalue(&pair, guess, 1e-13).unwrap();
            // ‖W⁻¹H‖ is near 1e7 here, so the dense values carry errors around
            // 1e-9; the polished ones are real to roughly 1e-13.
            assert!((polished - target).norm() < 1e-7 * target.norm(), "{polished} vs {target}");
            assert!(polished.im.abs() < 1e-11, "{polished}");
        }
    }

    #[test]
    fn tridiagonal_solve() {
        let one = c64(1.0, 0.0);
        let diag = [c64(2.0, 1.0), c64(3.0, 0.0), c64(4.0, -1.0)];
        let off = [one, c64(0.0, 2.0)];
        let x = [c64(1.0, -1.0), c64(0.5, 0.0), c64(-2.0, 3.0)];
        let rhs = [
            diag[0] * x[0] + off[0] * x[1],
            off[0] * x[0] + diag[1] * x[1] + off[1] * x[2],
            off[1] * x[1] + diag[2] * x[2],
        ];
        let got = solve_symmetric_tridiagonal(&diag, &off, &rhs);
        assert!(close_vec(&got, &x, 1e-14));
    }
}
