//! Direct shooting along the spiral, with no rectification involved.
//!
//! The equation `-φ'' + V(z) φ = E φ` is integrated in the angle `γ` with
//! `dz = z'(γ) dγ` from both truncated ends `±γ_max` inward to the matching
//! angle. Each half starts on the solution that decays outward, so the
//! inward integration follows the growing solution and is stable. Energies
//! are the zeros of the normalized Wronskian of the two halves.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::contour::{spiral_point, ContourError, ContourSpec, Profile};
use crate::model::ModelSpec;
use crate::par::{self, Exec};
use crate::{c64, I};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShootError {
    #[error("gamma_max must lie in (|match_gamma|, pi/2), got {0}")]
    BadGammaMax(f64),
    #[error("at least 100 steps per half path are required, got {0}")]
    TooFewSteps(usize),
    #[error("secant iteration from {guess} did not converge (last |F| = {residual:e})")]
    NoConvergence { guess: Complex64, residual: f64 },
    #[error("integration produced a non-finite value at gamma = {0}")]
    NonFinite(f64),
    #[error("initial guesses {0} and {1} are closer than root_tol")]
    GuessesTooClose(Complex64, Complex64),
    #[error("the decay action never reaches the target before gamma = pi/2")]
    TruncationNotFound,
    #[error("resolving the path needs about {needed:e} steps per half, above the cap")]
    StepTooCoarse { needed: f64 },
    #[error("the wanted solution decays by e^{loss:.1} on the way inward; shooting along this path is unstable")]
    UnstablePath { loss: f64 },
    #[error(transparent)]
    Contour(#[from] ContourError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootConfig {
    pub gamma_max: f64,
    pub steps: usize,
    pub match_gamma: f64,
    pub root_tol: f64,
    pub max_iter: usize,
}

impl ShootConfig {
    pub fn new(gamma_max: f64, steps: usize) -> Result<Self, ShootError> {
        let cfg = Self {
            gamma_max,
            steps,
            match_gamma: 0.0,
            root_tol: 1e-7,
            max_iter: 60,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Picks `gamma_max` and the step count.
    ///
    /// Two conditions fix `gamma_max`: the decaying and growing solutions must
    /// differ by a factor of at least `1e12` between the end and the matching
    /// point at energy `e_ref`, and the end of the path must lie well inside
    /// the Stokes wedge (of the leading `c_k z^k`) that the spiral reaches as
    /// `γ -> ±π/2`. The step count keeps `|q dz| ≤ 0.01` per step
    /// (`q² = V - E`).
    pub fn auto(model: &ModelSpec, contour: &ContourSpec, e_ref: Complex64) -> Result<Self, ShootError> {
        const ACTION: f64 = 27.631_021_115_928_547; // ln(1e12)
        const PER_STEP: f64 = 0.01;
        let d = 1e-4;
        let mut best_gamma: f64 = 0.0;
        let mut best_path: f64 = 0.0;
        for sign in [1.0, -1.0] {
            let wedge = WedgeTarget::new(model, contour, sign);
            let mut gamma: f64 = 0.0;
            let mut action = 0.0;
            let mut path = 0.0;
            while action < ACTION || !WedgeTarget::admits(&wedge, sign * gamma) {
                let g = gamma + 0.5 * d;
                if g + d >= FRAC_PI_2 {
                    return Err(ShootError::TruncationNotFound);
                }
                let (z, dz) = z_and_derivative(contour, sign * g)?;
                let q = (model.potential(z) - e_ref).sqrt();
                let step = q * dz * d;
                action += step.re.abs();
                path += step.norm();
                gamma += d;
            }
            best_gamma = best_gamma.max(gamma);
            best_path = best_path.max(path);
        }
        let steps = (best_path / PER_STEP).ceil().max(1000.0);
        if steps > MAX_STEPS as f64 {
            return Err(ShootError::StepTooCoarse { needed: steps });
        }
        for sign in [1.0, -1.0] {
            let loss = inward_decay(model, contour, e_ref, sign * best_gamma)?;
            if loss > MAX_INWARD_DECAY {
                return Err(ShootError::UnstablePath { loss });
            }
        }
        Self::new(best_gamma, steps as usize)
    }

    pub fn with_steps(mut self, steps: usize) -> Result<Self, ShootError> {
        self.steps = steps;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ShootError> {
        if !(self.gamma_max < FRAC_PI_2 && self.gamma_max > self.match_gamma.abs()) {
            return Err(ShootError::BadGammaMax(self.gamma_max));
        }
        if self.steps < 100 {
            return Err(ShootError::TooFewSteps(self.steps));
        }
        Ok(())
    }
}

/// Largest tolerated drop of `ln|φ|` along an inward half path, `ln(1e5)`.
/// On the winding-1 cubic a drop of `e^8.7` still gives roots good to `1e-9`
/// while `e^16` already stalls the secant iteration.
pub const MAX_INWARD_DECAY: f64 = 11.512_925_464_970_229;

/// Largest drop of the WKB estimate `ln|φ| ≈ Re ∫ -q dz` below its running
/// maximum while integrating inward from `gamma_end` to 0.
///
/// The integration is only stable while the wanted solution grows inward. If
/// it falls by many orders of magnitude somewhere, round-off in the other
/// solution swamps it and the matching condition ends up describing a
/// different boundary problem. The branch of `q` is continued by proximity.
fn inward_decay(model: &ModelSpec, contour: &ContourSpec, e_ref: Complex64, gamma_end: f64) -> Result<f64, ShootError> {
    let d = 1e-4_f64.copysign(-gamma_end);
    let n = (gamma_end / d).abs().floor() as usize;
    let (z0, dz0) = z_and_derivative(contour, gamma_end)?;
    let mut q = (model.potential(z0) - e_ref).sqrt();
    // the seed decays outward, i.e. along -dz0 * sign(d)
    if (q * dz0 * d).re > 0.0 {
        q = -q;
    }
    let (mut log_phi, mut peak, mut loss): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let g = gamma_end + (i as f64 + 0.5) * d;
        let (z, dz) = z_and_derivative(contour, g)?;
        let next = (model.potential(z) - e_ref).sqrt();
        q = if (next - q).norm() <= (next + q).norm() { next } else { -next };
        log_phi -= (q * dz * d).re;
        peak = peak.max(log_phi);
        loss = loss.max(peak - log_phi);
    }
    Ok(loss)
}

/// Upper bound on the automatic step count per half path.
pub const MAX_STEPS: usize = 4_000_000;

/// The Stokes wedge an end of the spiral must sit in.
///
/// For a leading term `c_k z^k` solutions behave like
/// `exp(±(2/(k+2)) √c_k z^{(k+2)/2})`, so one of them decays fastest along
/// every direction where `√c_k z^{(k+2)/2}` is real. Those directions are the
/// wedge centres; each wedge has half-width `π/(k+2)`. Along the spiral
/// `arg z = -π/2 + (2N+1)γ` exactly.
struct WedgeTarget {
    exponent: f64,
    centre: f64,
    limit: f64,
}

impl WedgeTarget {
    fn new(model: &ModelSpec, contour: &ContourSpec, sign: f64) -> Option<Self> {
        use std::f64::consts::{PI, TAU};
        let (&k, c) = model.coeffs().iter().rev().find(|(k, c)| **k > 0 && c.norm() > 0.0)?;
        let m = f64::from(contour.exponent());
        let half = PI / f64::from(k + 2);
        let asymptote = -FRAC_PI_2 + m * sign * FRAC_PI_2;
        // centres θ_j = (2πj - arg c) / (k+2); take the one nearest the asymptote
        let base = -c.arg() / f64::from(k + 2);
        let spacing = TAU / f64::from(k + 2);
        let j = ((asymptote - base) / spacing).round();
        let centre = base + j * spacing;
        let off = (asymptote - centre).abs();
        if off >= half {
            // The spiral does not end inside any wedge; leave the truncation to
            // the action condition alone.
            return None;
        }
        Some(Self {
            exponent: m,
            centre,
            limit: (0.9 * half).max(0.5 * (off + half)),
        })
    }

    /// True when the spiral point at `gamma` lies inside the target wedge, or
    /// when there is no wedge to aim for.
    fn admits(target: &Option<Self>, gamma: f64) -> bool {
        target.as_ref().is_none_or(|w| {
            let theta = -FRAC_PI_2 + w.exponent * gamma;
            (theta - w.centre).abs() <= w.limit
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// `φ` and `dφ/dz` at the matching point, with the accumulated overflow
/// rescaling `φ_true = e^{log_scale} φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSolution {
    pub value: Complex64,
    pub derivative: Complex64,
    pub log_scale: f64,
    pub renormalizations: usize,
}

/// `z(γ)` and `dz/dγ`.
fn z_and_derivative(contour: &ContourSpec, gamma: f64) -> Result<(Complex64, Complex64), ContourError> {
    let m = contour.exponent();
    match contour.profile() {
        Profile::Constant => {
            let rho = contour.epsilon() / gamma.cos();
            let z = -I * Complex64::from_polar(rho.powi(m), f64::from(m) * gamma);
            Ok((z, f64::from(m) * z * (gamma.tan() + I)))
        }
        Profile::Custom(_) => {
            let h = 1e-6 * (FRAC_PI_2 - gamma.abs()).min(1.0);
            let z = spiral_point(gamma, contour)?.z;
            let zp = spiral_point(gamma + h, contour)?.z;
            let zm = spiral_point(gamma - h, contour)?.z;
            Ok((z, (zp - zm) / (2.0 * h)))
        }
    }
}

const RENORMALIZE_ABOVE: f64 = 1e100;

pub fn integrate_halfpath(
    model: &ModelSpec,
    contour: &ContourSpec,
    e: Complex64,
    side: Side,
    cfg: &ShootConfig,
) -> Result<HalfSolution, ShootError> {
    cfg.validate()?;
    let (start, dir) = match side {
        Side::Right => (cfg.gamma_max, 1.0),
        Side::Left => (-cfg.gamma_max, -1.0),
    };
    let (z0, dz0) = z_and_derivative(contour, start)?;
    // Outward direction is dir * dz/dγ; pick the branch of q that decays there.
    let q = (model.potential(z0) - e).sqrt();
    let q = if (q * dz0 * dir).re >= 0.0 { q } else { -q };
    let mut phi = c64(1.0, 0.0);
    let mut dphi = -q;

    let rhs = |gamma: f64, phi: Complex64, dphi: Complex64| -> Result<(Complex64, Complex64), ShootError> {
        let (z, dz) = z_and_derivative(contour, gamma)?;
        Ok((dphi * dz, (model.potential(z) - e) * phi * dz))
    };

    let h = (cfg.match_gamma - start) / cfg.steps as f64;
    let mut log_scale = 0.0;
    let mut renormalizations = 0;
    for k in 0..cfg.steps {
        let g = start + k as f64 * h;
        let (a1, b1) = rhs(g, phi, dphi)?;
        let (a2, b2) = rhs(g + 0.5 * h, phi + 0.5 * h * a1, dphi + 0.5 * h * b1)?;
        let (a3, b3) = rhs(g + 0.5 * h, phi + 0.5 * h * a2, dphi + 0.5 * h * b2)?;
        let (a4, b4) = rhs(g + h, phi + h * a3, dphi + h * b3)?;
        phi += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        dphi += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        let size = phi.norm().max(dphi.norm());
        if !size.is_finite() {
            return Err(ShootError::NonFinite(g + h));
        }
        if size > RENORMALIZE_ABOVE {
            phi /= size;
            dphi /= size;
            log_scale += size.ln();
            renormalizations += 1;
        }
    }
    Ok(HalfSolution {
        value: phi,
        derivative: dphi,
        log_scale,
        renormalizations,
    })
}

/// Normalized Wronskian `(φ_L φ'_R - φ_R φ'_L) / (‖(φ_L, φ'_L)‖ ‖(φ_R, φ'_R)‖)`.
pub fn mismatch(
    model: &ModelSpec,
    contour: &ContourSpec,
    e: Complex64,
    cfg: &ShootConfig,
) -> Result<Complex64, ShootError> {
    let l = integrate_halfpath(model, contour, e, Side::Left, cfg)?;
    let r = integrate_halfpath(model, contour, e, Side::Right, cfg)?;
    let nl = (l.value.norm_sqr() + l.derivative.norm_sqr()).sqrt();
    let nr = (r.value.norm_sqr() + r.derivative.norm_sqr()).sqrt();
    Ok((l.value * r.derivative - r.value * l.derivative) / (nl * nr))
}

/// Outcome of one secant run.
#[derive(Debug, Clone, PartialEq)]
pub struct RootReport {
    pub guess: Complex64,
    pub outcome: Result<Complex64, ShootError>,
    pub iterations: usize,
}

fn secant(
    model: &ModelSpec,
    contour: &ContourSpec,
    cfg: &ShootConfig,
    guess: Complex64,
) -> RootReport {
    let mut e0 = guess;
    let mut e1 = guess + 1e-3 * guess.norm().max(1.0);
    let mut f0 = match mismatch(model, contour, e0, cfg) {
        Ok(f) => f,
        Err(err) => return RootReport { guess, outcome: Err(err), iterations: 0 },
    };
    let mut last = f0.norm();
    for it in 1..=cfg.max_iter {
        let f1 = match mismatch(model, contour, e1, cfg) {
            Ok(f) => f,
            Err(err) => return RootReport { guess, outcome: Err(err), iterations: it },
        };
        last = f1.norm();
        let step_ok = (e1 - e0).norm() <= 1e-12 * e1.norm().max(1.0);
        if last < cfg.root_tol && step_ok {
            return RootReport { guess, outcome: Ok(e1), iterations: it };
        }
        let denom = f1 - f0;
        if denom == c64(0.0, 0.0) {
            break;
        }
        let e2 = e1 - f1 * (e1 - e0) / denom;
        if !(e2.re.is_finite() && e2.im.is_finite()) {
            break;
        }
        e0 = e1;
        f0 = f1;
        e1 = e2;
    }
    RootReport {
        guess,
        outcome: Err(ShootError::NoConvergence { guess, residual: last }),
        iterations: cfg.max_iter,
    }
}

/// Runs the secant search from every guess (concurrently under the default
/// policy). Failed guesses are reported, not fatal.
pub fn search(
    model: &ModelSpec,
    contour: &ContourSpec,
    cfg: &ShootConfig,
    guesses: &[Complex64],
    exec: Exec,
) -> Result<Vec<RootReport>, ShootError> {
    cfg.validate()?;
    for (i, a) in guesses.iter().enumerate() {
        for b in &guesses[i + 1..] {
            if (a - b).norm() <= cfg.root_tol {
                return Err(ShootError::GuessesTooClose(*a, *b));
            }
        }
    }
    Ok(par::map_slice(exec, guesses, |&g| secant(model, contour, cfg, g)))
}

/// Converged roots, deduplicated (relative distance `1e-6`) and sorted by real
/// part.
pub fn find_eigenvalues(
    model: &ModelSpec,
    contour: &ContourSpec,
    cfg: &ShootConfig,
    guesses: &[Complex64],
) -> Result<Vec<Complex64>, ShootError> {
    let reports = search(model, contour, cfg, guesses, Exec::default())?;
    Ok(dedup_roots(reports.iter().filter_map(|r| r.outcome.clone().ok())))
}

pub fn dedup_roots(roots: impl IntoIterator<Item = Complex64>) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::new();
    for r in roots {
        if !out.iter().any(|o| (o - r).norm() <= 1e-6 * r.norm().max(1.0)) {
            out.push(r);
        }
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re));
    out
}

/// One sample of a mismatch scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub e: Complex64,
    pub abs_f: f64,
}

/// `|F(E)|` on a rectangular grid of energies, row-major in the imaginary
/// part. Points where the integration fails are reported as `NaN`.
pub fn mismatch_scan(
    model: &ModelSpec,
    contour: &ContourSpec,
    cfg: &ShootConfig,
    re: (f64, f64, usize),
    im: (f64, f64, usize),
    exec: Exec,
) -> Vec<ScanPoint> {
    let axis = |(lo, hi, n): (f64, f64, usize), k: usize| {
        if n <= 1 {
            lo
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    };
    let total = re.2 * im.2;
    par::map_range(exec, total, |idx| {
        let e = c64(axis(re, idx % re.2), axis(im, idx / re.2));
        let abs_f = mismatch(model, contour, e, cfg).map_or(f64::NAN, |f| f.norm());
        ScanPoint { e, abs_f }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator() -> ModelSpec {
        ModelSpec::new(0.0).unwrap().with_omega(1.0).unwrap()
    }

    fn line(eps: f64) -> ContourSpec {
        ContourSpec::new(eps, 0).unwrap()
    }

    #[test]
    fn oscillator_mismatch_vanishes_only_at_eigenvalues() {
        let model = oscillator();
        let contour = line(0.5);
        let cfg = ShootConfig::auto(&model, &contour, c64(5.0, 0.0)).unwrap();
        let at_root = mismatch(&model, &contour, c64(1.0, 0.0), &cfg).unwrap();
        let off_root = mismatch(&model, &contour, c64(2.0, 0.0), &cfg).unwrap();
        assert!(at_root.norm() < 1e-6, "{at_root}");
        assert!(off_root.norm() > 0.1, "{off_root}");
    }

    #[test]
    fn oscillator_roots() {
        let model = oscillator();
        let contour = line(0.5);
        let cfg = ShootConfig::auto(&model, &contour, c64(6.0, 0.0)).unwrap();
        let guesses = [0.8, 2.7, 5.2].map(|x| c64(x, 0.0));
        let roots = find_eigenvalues(&model, &contour, &cfg, &guesses).unwrap();
        assert_eq!(roots.len(), 3);
        for (r, exact) in roots.iter().zip([1.0, 3.0, 5.0]) {
            assert!((r - c64(exact, 0.0)).norm() < 1e-6, "{r}");
        }
    }

    #[test]
    fn free_model_is_stable() {
        let model = ModelSpec::new(0.0).unwrap();
        let contour = line(1.0);
        let cfg = ShootConfig::new(1.5, 10_000).unwrap();
        let half = integrate_halfpath(&model, &contour, c64(1.0, 0.5), Side::Right, &cfg).unwrap();
        assert_eq!(half.renormalizations, 0);
        assert!(half.value.norm().is_finite() && half.derivative.norm().is_finite());
    }

    #[test]
    fn config_validation() {
        assert!(matches!(ShootConfig::new(FRAC_PI_2, 1000), Err(ShootError::BadGammaMax(_))));
        assert!(matches!(ShootConfig::new(1.0, 99), Err(ShootError::TooFewSteps(99))));
        let model = oscillator();
        let cfg = ShootConfig::new(1.4, 1000).unwrap();
        let g = [c64(1.0, 0.0), c64(1.0, 0.0)];
        assert!(matches!(
            search(&model, &line(0.5), &cfg, &g, Exec::Sequential),
            Err(ShootError::GuessesTooClose(..))
        ));
    }

    #[test]
    fn dedup() {
        let r = dedup_roots([c64(3.0, 0.0), c64(1.0, 0.0), c64(1.0 + 1e-9, 0.0)]);
        assert_eq!(r, vec![c64(1.0, 0.0), c64(3.0, 0.0)]);
    }

    #[test]
    fn scan_shape_and_policies() {
        let model = oscillator();
        let contour = line(0.5);
        let cfg = ShootConfig::new(1.45, 2000).unwrap();
        let a = mismatch_scan(&model, &contour, &cfg, (0.0, 4.0, 3), (-1.0, 1.0, 2), Exec::Sequential);
        let b = mismatch_scan(&model, &contour, &cfg, (0.0, 4.0, 3), (-1.0, 1.0, 2), Exec::default());
        assert_eq!(a.len(), 6);
        assert_eq!(a, b);
        assert_eq!(a[4].e, c64(2.0, 1.0));
    }

    #[test]
    fn wide_toboggan_paths_are_refused() {
        let model = ModelSpec::cubic_toboggan(0.05, 0.0).unwrap();
        let e = c64(12.0, 0.0);
        assert!(ShootConfig::auto(&model, &ContourSpec::new(0.1, 1).unwrap(), e).is_ok());
        assert!(matches!(
            ShootConfig::auto(&model, &ContourSpec::new(0.3, 1).unwrap(), e),
            Err(ShootError::UnstablePath { .. })
        ));
    }

    #[test]
    fn end_lands_in_the_asymptotic_wedge() {
        // iz³ with winding 1 ends near arg z = π; the wedge there is centred
        // at 11π/10 with half-width π/5.
        let model = ModelSpec::cubic_toboggan(0.0, 0.0).unwrap();
        let contour = ContourSpec::new(0.2, 1).unwrap();
        let w = WedgeTarget::new(&model, &contour, 1.0).unwrap();
        assert!((w.centre - 1.1 * std::f64::consts::PI).abs() < 1e-12);
        let cfg = ShootConfig::auto(&model, &contour, c64(12.0, 0.0)).unwrap();
        assert!(WedgeTarget::admits(&Some(w), cfg.gamma_max));
        // the free model has no wedge and never constrains the end
        assert!(WedgeTarget::new(&ModelSpec::new(0.0).unwrap(), &contour, 1.0).is_none());
    }
}
