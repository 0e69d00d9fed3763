//! Straight and spiral integration paths, and the rectification map
//! `i r = (i z)^(1/(2N+1))` between them.
//!
//! The spiral is parametrized by an angle `γ ∈ (-π/2, π/2)`:
//!
//! ```text
//! x(γ) = ε tan γ,   ϱ(γ) = ε(x(γ)) / cos γ
//! r(γ) = -i ϱ e^{iγ}                      (the shifted line x - iε)
//! z(γ) = -i ϱ^{2N+1} e^{i(2N+1)γ}         (the N-fold spiral)
//! ```
//!
//! Fractional powers are always resolved with the argument `(2N+1)γ` carried
//! by the parametrization, never with a principal-value cut: going from `r`
//! to `z` is a polynomial map, going back picks the sheet from `γ`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::{c64, I};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContourError {
    #[error("shift epsilon must be positive and finite, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("angle gamma = {0} lies outside (-pi/2, pi/2)")]
    AngleOutOfRange(f64),
    #[error("profile is not positive at x = {x} (eps = {value})")]
    NonPositiveProfile { x: f64, value: f64 },
    #[error("x(gamma) is not uniquely defined by the profile at gamma = {0}")]
    NonInvertibleProfile(f64),
    #[error("path passes through the origin at sample {0}")]
    PathThroughOrigin(usize),
    #[error("argument jumps by more than pi after sample {0}")]
    BranchJump(usize),
}

/// Shift profile `ε(x)` of the line `r(x) = x - iε(x)`.
#[derive(Clone, Default)]
pub enum Profile {
    #[default]
    Constant,
    /// Even, positive, smooth profile. Evenness keeps the discretized
    /// operators PT-symmetric.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant => f.write_str("Constant"),
            Profile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContourSpec {
    epsilon: f64,
    winding: u32,
    profile: Profile,
}

impl ContourSpec {
    pub fn new(epsilon: f64, winding: u32) -> Result<Self, ContourError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(ContourError::NonPositiveEpsilon(epsilon));
        }
        Ok(Self {
            epsilon,
            winding,
            profile: Profile::Constant,
        })
    }

    /// Replaces the constant shift by `profile`. `epsilon` keeps the value of
    /// the shift at `x = 0`.
    pub fn with_profile<F>(mut self, profile: F) -> Result<Self, ContourError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let at_zero = profile(0.0);
        if !(at_zero > 0.0 && at_zero.is_finite()) {
            return Err(ContourError::NonPositiveProfile {
                x: 0.0,
                value: at_zero,
            });
        }
        self.epsilon = at_zero;
        self.profile = Profile::Custom(Arc::new(profile));
        Ok(self)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn winding(&self) -> u32 {
        self.winding
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// `2N + 1`
    pub fn exponent(&self) -> i32 {
        2 * self.winding as i32 + 1
    }

    pub fn epsilon_at(&self, x: f64) -> f64 {
        match &self.profile {
            Profile::Constant => self.epsilon,
            Profile::Custom(f) => f(x),
        }
    }

    /// Solves `x = ε(x) tan γ`.
    pub fn x_of_gamma(&self, gamma: f64) -> Result<f64, ContourError> {
        check_gamma(gamma)?;
        let t = gamma.tan();
        match &self.profile {
            Profile::Constant => Ok(self.epsilon * t),
            Profile::Custom(f) => solve_profile(f.as_ref(), gamma, t),
        }
    }
}

/// A point of the spiral together with its rectified partner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourPoint {
    pub gamma: f64,
    pub x: f64,
    pub z: Complex64,
    pub r: Complex64,
}

/// `r(x) = x - iε(x)`
pub fn line_point(x: f64, spec: &ContourSpec) -> Complex64 {
    c64(x, -spec.epsilon_at(x))
}

pub fn spiral_point(gamma: f64, spec: &ContourSpec) -> Result<ContourPoint, ContourError> {
    let x = spec.x_of_gamma(gamma)?;
    let eps = spec.epsilon_at(x);
    if !(eps > 0.0) {
        return Err(ContourError::NonPositiveProfile { x, value: eps });
    }
    let rho = eps / gamma.cos();
    let m = spec.exponent();
    let r = -I * Complex64::from_polar(rho, gamma);
    let z = -I * Complex64::from_polar(rho.powi(m), f64::from(m) * gamma);
    Ok(ContourPoint { gamma, x, z, r })
}

/// Uniform γ-sampling of the spiral on `[-gamma_max, gamma_max]`.
pub fn sample_spiral(
    spec: &ContourSpec,
    count: usize,
    gamma_max: f64,
) -> Result<Vec<ContourPoint>, ContourError> {
    check_gamma(gamma_max)?;
    if count < 2 {
        return spiral_point(0.0, spec).map(|p| vec![p]);
    }
    let step = 2.0 * gamma_max / (count - 1) as f64;
    (0..count)
        .map(|k| spiral_point(-gamma_max + k as f64 * step, spec))
        .collect()
}

/// `z = -i (i r)^(2N+1)`; a polynomial, so no branch choice is involved.
pub fn unrectify_value(r: Complex64, winding: u32) -> Complex64 {
    -I * (I * r).powi(2 * winding as i32 + 1)
}

pub fn unrectify(points: &[ContourPoint], winding: u32) -> Vec<Complex64> {
    points.iter().map(|p| unrectify_value(p.r, winding)).collect()
}

/// Maps `(γ, z)` samples of a spiral back to the straight line.
///
/// The root `(i z)^(1/(2N+1))` takes the sheet whose argument is closest to
/// `(2N+1)γ`; consecutive samples must then differ in argument by less
/// than π.
pub fn rectify(path: &[(f64, Complex64)], winding: u32) -> Result<Vec<Complex64>, ContourError> {
    let m = f64::from(2 * winding + 1);
    let mut out = Vec::with_capacity(path.len());
    let mut previous: Option<f64> = None;
    for (k, &(gamma, z)) in path.iter().enumerate() {
        check_gamma(gamma)?;
        let w = I * z;
        let modulus = w.norm();
        if !(modulus > f64::MIN_POSITIVE) {
            return Err(ContourError::PathThroughOrigin(k));
        }
        let principal = w.arg();
        let target = m * gamma;
        let sheet = ((target - principal) / (2.0 * PI)).round();
        let theta = principal + 2.0 * PI * sheet;
        if let Some(prev) = previous {
            if (theta - prev).abs() >= PI {
                return Err(ContourError::BranchJump(k - 1));
            }
        }
        previous = Some(theta);
        let ir = Complex64::from_polar(modulus.powf(1.0 / m), theta / m);
        out.push(-I * ir);
    }
    Ok(out)
}

/// Total change of `arg(i z)` along the path, tracked continuously.
pub fn arg_sweep(points: &[ContourPoint]) -> f64 {
    let mut total = 0.0;
    for pair in points.windows(2) {
        let a = (I * pair[0].z).arg();
        let b = (I * pair[1].z).arg();
        let mut d = b - a;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        total += d;
    }
    total
}

fn check_gamma(gamma: f64) -> Result<(), ContourError> {
    if gamma.is_finite() && gamma.abs() < FRAC_PI_2 {
        Ok(())
    } else {
        Err(ContourError::AngleOutOfRange(gamma))
    }
}

// x - ε(x) tan γ must have a single increasing root; bracket it by doubling,
// then bisect.
fn solve_profile(f: &(dyn Fn(f64) -> f64 + Send + Sync), gamma: f64, t: f64) -> Result<f64, ContourError> {
    let g = |x: f64| x - f(x) * t;
    let g0 = g(0.0);
    if g0 == 0.0 {
        return Ok(0.0);
    }
    let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
    let mut inner = 0.0;
    let mut outer = dir;
    let mut found = false;
    for _ in 0..1100 {
        if g(outer).signum() != g0.signum() {
            found = true;
            break;
        }
        inner = outer;
        outer *= 2.0;
        if !outer.is_finite() {
            break;
        }
    }
    if !found {
        return Err(ContourError::NonInvertibleProfile(gamma));
    }
    let (mut lo, mut hi) = if inner < outer { (inner, outer) } else { (outer, inner) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid).signum() == g(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let dx = 1e-6 * (1.0 + x.abs());
    if g(x + dx) - g(x - dx) <= 0.0 {
        return Err(ContourError::NonInvertibleProfile(gamma));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn line_points() {
        let unit = ContourSpec::new(1.0, 0).unwrap();
        assert_eq!(line_point(0.0, &unit), c64(0.0, -1.0));
        let half = ContourSpec::new(0.5, 0).unwrap();
        assert_eq!(line_point(2.0, &half), c64(2.0, -0.5));
        let bowl = ContourSpec::new(1.0, 0)
            .unwrap()
            .with_profile(|x| 1.0 + x * x)
            .unwrap();
        assert_eq!(line_point(-3.0, &bowl), c64(-3.0, -10.0));
    }

    #[test]
    fn spiral_at_zero_angle() {
        let spec = ContourSpec::new(1.0, 3).unwrap();
        let p = spiral_point(0.0, &spec).unwrap();
        assert!(close(p.z, -I, 1e-15));
        assert!(close(p.r, -I, 1e-15));
    }

    #[test]
    fn spiral_quarter_turn_single_winding() {
        let spec = ContourSpec::new(1.0, 1).unwrap();
        let p = spiral_point(FRAC_PI_4, &spec).unwrap();
        assert!(close(p.z, c64(2.0, 2.0), 1e-13), "{}", p.z);
    }

    #[test]
    fn zero_winding_is_the_line() {
        let spec = ContourSpec::new(0.7, 0).unwrap();
        for k in -20..=20 {
            let gamma = 1.5 * k as f64 / 20.0;
            let p = spiral_point(gamma, &spec).unwrap();
            let x = 0.7 * gamma.tan();
            assert!((p.x - x).abs() <= 1e-14 * (1.0 + x.abs()));
            assert!(close(p.z, line_point(x, &spec), 1e-14 * (1.0 + x.abs())));
        }
    }

    #[test]
    fn rejects_right_angle() {
        let spec = ContourSpec::new(1.0, 1).unwrap();
        assert!(matches!(
            spiral_point(FRAC_PI_2, &spec),
            Err(ContourError::AngleOutOfRange(_))
        ));
        assert!(spiral_point(-2.0, &spec).is_err());
        assert!(ContourSpec::new(0.0, 1).is_err());
        assert!(ContourSpec::new(-1.0, 1).is_err());
    }

    #[test]
    fn unrectify_examples() {
        assert!(close(unrectify_value(-I, 1), -I, 1e-15));
        assert!(close(unrectify_value(c64(1.0, 0.0), 1), c64(-1.0, 0.0), 1e-15));
    }

    #[test]
    fn rectify_cube_root_on_gamma_branch() {
        let r = rectify(&[(0.0, c64(0.0, -8.0))], 1).unwrap();
        assert!(close(r[0], c64(0.0, -2.0), 1e-14));
        // z(r = 1) = -1, but the principal cube root of i z = -i does not
        // give back r = 1.
        let naive = -I * (I * c64(-1.0, 0.0)).powf(1.0 / 3.0);
        assert!(!close(naive, c64(1.0, 0.0), 1e-3));
    }

    #[test]
    fn rectify_identity_for_line() {
        let spec = ContourSpec::new(0.4, 0).unwrap();
        let pts = sample_spiral(&spec, 31, 1.4).unwrap();
        let path: Vec<_> = pts.iter().map(|p| (p.gamma, p.z)).collect();
        let r = rectify(&path, 0).unwrap();
        for (p, r) in pts.iter().zip(&r) {
            assert!(close(*r, p.z, 1e-14 * (1.0 + p.z.norm())));
        }
    }

    #[test]
    fn round_trip_on_sampled_spiral() {
        for n in 0..4 {
            let spec = ContourSpec::new(0.8, n).unwrap();
            let pts = sample_spiral(&spec, 101, 1.45).unwrap();
            let path: Vec<_> = pts.iter().map(|p| (p.gamma, p.z)).collect();
            let r = rectify(&path, n).unwrap();
            for (p, r) in pts.iter().zip(&r) {
                let z = unrectify_value(*r, n);
                assert!((z - p.z).norm() <= 1e-12 * p.z.norm(), "N={n} gamma={}", p.gamma);
                assert!((r - p.r).norm() <= 1e-12 * p.r.norm());
            }
        }
    }

    #[test]
    fn winding_sweep() {
        for n in 0..4 {
            let spec = ContourSpec::new(1.0, n).unwrap();
            let pts = sample_spiral(&spec, 4001, FRAC_PI_2 - 1e-6).unwrap();
            let sweep = arg_sweep(&pts);
            let expected = f64::from(2 * n + 1) * PI;
            assert!((sweep - expected).abs() < 1e-4, "N={n}: {sweep}");
        }
    }

    #[test]
    fn large_x_asymptotics() {
        for n in 0..4u32 {
            let eps = 0.3;
            let spec = ContourSpec::new(eps, n).unwrap();
            let x = 1e3;
            let z = unrectify_value(line_point(x, &spec), n);
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let approx = sign * x.powi(2 * n as i32) * c64(x, -f64::from(2 * n + 1) * eps);
            // the O(1/x) remainder is scaled by x^{2N}
            assert!((z - approx).norm() <= 10.0 * x.powi(2 * n as i32) / x, "N={n}");
        }
    }

    #[test]
    fn variable_profile_spiral() {
        let spec = ContourSpec::new(0.5, 1)
            .unwrap()
            .with_profile(|x| 0.5 + 0.3 / (1.0 + x * x))
            .unwrap();
        assert!((spec.epsilon() - 0.8).abs() < 1e-15);
        for k in -10..=10 {
            let gamma = 0.14 * k as f64;
            let p = spiral_point(gamma, &spec).unwrap();
            assert!(close(p.r, line_point(p.x, &spec), 1e-10 * (1.0 + p.x.abs())));
            assert!(close(p.z, unrectify_value(p.r, 1), 1e-10 * (1.0 + p.z.norm())));
        }
        // x = (0.5 + 0.1 x^2) tan γ has no real solution once tan γ > √5.
        let growing = ContourSpec::new(0.5, 1)
            .unwrap()
            .with_profile(|x| 0.5 + 0.1 * x * x)
            .unwrap();
        assert!(spiral_point(0.5, &growing).is_ok());
        assert!(matches!(
            spiral_point(1.4, &growing),
            Err(ContourError::NonInvertibleProfile(_))
        ));
    }

    #[test]
    fn rectify_rejects_origin() {
        assert!(matches!(
            rectify(&[(0.0, c64(0.0, 0.0))], 1),
            Err(ContourError::PathThroughOrigin(0))
        ));
    }
}
