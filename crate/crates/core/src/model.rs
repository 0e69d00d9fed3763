//! Physical models `-φ'' + [ℓ(ℓ+1)/z² + Σ c_k z^k] φ = E φ` and their
//! rectified images `-ψ'' + [L(L+1)/r² + Ṽ(r)] ψ = E W(r) ψ`.
//!
//! With `z = -i (i r)^(2N+1)` one has `(dz/dr)² = (2N+1)² r^{4N}`, so
//!
//! ```text
//! c_k z^k        ->  (2N+1)² β_k c_k r^{k(2N+1)+4N}
//! ℓ(ℓ+1)/z²      ->  L(L+1)/r²,      L = (2N+1)(ℓ + 1/2) - 1/2
//! E              ->  E (2N+1)² r^{4N}
//! ```
//!
//! where `β_k` is the sign picked up by `z^k`; see [`BranchConvention`].

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::contour::{ContourError, ContourSpec};
use crate::{c64, I};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("coefficient of z^{0} is not finite")]
    NonFiniteCoefficient(u32),
    #[error("centrifugal parameter ell must be finite, got {0}")]
    NonFiniteEll(f64),
    #[error("omega and an explicit z^2 coefficient were both given")]
    ConflictingQuadratic,
    #[error("invalid model file: {0}")]
    InvalidFile(String),
    #[error("wave function and path lengths differ ({values} vs {points})")]
    LengthMismatch { values: usize, points: usize },
    #[error(transparent)]
    Contour(#[from] ContourError),
}

/// Sign convention for the rectified polynomial terms.
///
/// `Substitution` is the exact change of variables: `z^k = (-1)^{Nk} r^{k(2N+1)}`.
/// `Printed` drops the `(-1)^{Nk}`, which is what one gets from `z = r^{2N+1}`
/// (the spiral wound the other way). For even `N` or an integer `L` the two
/// give the same spectrum; for odd `N` and non-integer `L` only
/// `Substitution` agrees with shooting along the spiral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchConvention {
    #[default]
    Substitution,
    Printed,
}

impl BranchConvention {
    pub fn beta(self, k: u32, winding: u32) -> f64 {
        match self {
            BranchConvention::Substitution => {
                if (u64::from(k) * u64::from(winding)) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            BranchConvention::Printed => 1.0,
        }
    }
}

/// Centrifugal strength `ℓ` plus a finite polynomial potential.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelSpec {
    ell: f64,
    coeffs: BTreeMap<u32, Complex64>,
}

impl ModelSpec {
    pub fn new(ell: f64) -> Result<Self, ModelError> {
        if !ell.is_finite() {
            return Err(ModelError::NonFiniteEll(ell));
        }
        Ok(Self {
            ell,
            coeffs: BTreeMap::new(),
        })
    }

    /// Adds `c z^k` to the potential (accumulating onto an existing term).
    pub fn with_term(mut self, k: u32, c: Complex64) -> Result<Self, ModelError> {
        if !(c.re.is_finite() && c.im.is_finite()) {
            return Err(ModelError::NonFiniteCoefficient(k));
        }
        *self.coeffs.entry(k).or_insert(c64(0.0, 0.0)) += c;
        Ok(self)
    }

    /// Sets the quadratic coefficient to `ω²`.
    pub fn with_omega(self, omega: f64) -> Result<Self, ModelError> {
        if self.coeffs.contains_key(&2) {
            return Err(ModelError::ConflictingQuadratic);
        }
        self.with_term(2, c64(omega * omega, 0.0))
    }

    /// `ℓ(ℓ+1)/z² + ω² z² + i z³`
    pub fn cubic_toboggan(ell: f64, omega: f64) -> Result<Self, ModelError> {
        Self::new(ell)?.with_omega(omega)?.with_term(3, I)
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn coeffs(&self) -> &BTreeMap<u32, Complex64> {
        &self.coeffs
    }

    /// `ℓ(ℓ+1)`
    pub fn centrifugal(&self) -> f64 {
        self.ell * (self.ell + 1.0)
    }

    pub fn has_centrifugal(&self) -> bool {
        self.centrifugal() != 0.0
    }

    /// Real coefficients at even powers, imaginary ones at odd powers.
    pub fn is_pt_symmetric(&self) -> bool {
        self.coeffs.iter().all(|(&k, c)| {
            if k % 2 == 0 {
                c.im == 0.0
            } else {
                c.re == 0.0
            }
        })
    }

    pub fn potential(&self, z: Complex64) -> Complex64 {
        let mut v: Complex64 = self
            .coeffs
            .iter()
            .map(|(&k, &c)| c * z.powi(k as i32))
            .sum();
        if self.has_centrifugal() {
            v += self.centrifugal() / (z * z);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RectifiedModel {
    /// `L = (2N+1)(ℓ + 1/2) - 1/2`
    pub big_l: f64,
    /// Powers of `r` (exact) to coefficients, the `L(L+1)/r²` term included.
    pub terms: BTreeMap<Rational64, Complex64>,
    /// `(2N+1)²`
    pub weight_prefactor: f64,
    /// `4N`
    pub weight_power: i32,
    pub winding: u32,
    pub convention: BranchConvention,
}

impl RectifiedModel {
    pub fn centrifugal(&self) -> f64 {
        self.big_l * (self.big_l + 1.0)
    }

    pub fn has_negative_powers(&self) -> bool {
        self.terms.keys().any(|p| *p < Rational64::from_integer(0))
    }

    pub fn potential(&self, r: Complex64) -> Complex64 {
        self.terms.iter().map(|(p, &c)| c * power(r, *p)).sum()
    }

    /// `W(r) = (2N+1)² r^{4N}`
    pub fn weight(&self, r: Complex64) -> Complex64 {
        self.weight_prefactor * r.powi(self.weight_power)
    }

    /// PT symmetry of the rectified potential on a line `x - iε`:
    /// `c_p (-1)^p = conj(c_p)` for every integer power.
    pub fn is_pt_symmetric(&self) -> bool {
        self.terms.iter().all(|(p, c)| {
            if !p.is_integer() {
                return false;
            }
            if p.to_integer() % 2 == 0 {
                c.im == 0.0
            } else {
                c.re == 0.0
            }
        })
    }
}

fn power(r: Complex64, p: Rational64) -> Complex64 {
    if p.is_integer() {
        r.powi(p.to_integer() as i32)
    } else {
        // Rectified polynomial models only produce integer powers.
        r.powf(*p.numer() as f64 / *p.denom() as f64)
    }
}

pub fn rectify_model(spec: &ModelSpec, winding: u32, convention: BranchConvention) -> RectifiedModel {
    let m = 2 * i64::from(winding) + 1;
    let prefactor = (m * m) as f64;
    // m(ℓ + 1/2) - 1/2 written so that m = 1 returns ℓ bit for bit
    let big_l = m as f64 * spec.ell + (m - 1) as f64 / 2.0;
    let mut terms = BTreeMap::new();
    for (&k, &c) in &spec.coeffs {
        if c == c64(0.0, 0.0) {
            continue;
        }
        let p = Rational64::from_integer(i64::from(k) * m + 4 * i64::from(winding));
        let beta = convention.beta(k, winding);
        *terms.entry(p).or_insert(c64(0.0, 0.0)) += c * prefactor * beta;
    }
    let centrifugal = big_l * (big_l + 1.0);
    if centrifugal != 0.0 {
        *terms.entry(Rational64::from_integer(-2)).or_insert(c64(0.0, 0.0)) += c64(centrifugal, 0.0);
    }
    RectifiedModel {
        big_l,
        terms,
        weight_prefactor: prefactor,
        weight_power: 4 * winding as i32,
        winding,
        convention,
    }
}

/// `z^{-N/(2N+1)}` on the sheet selected by `γ` (`arg z ≈ -π/2 + (2N+1)γ`).
fn pullback_factor(gamma: f64, z: Complex64, winding: u32) -> Result<Complex64, ContourError> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let modulus = z.norm();
    if !(modulus > f64::MIN_POSITIVE) {
        return Err(ContourError::PathThroughOrigin(0));
    }
    let m = f64::from(2 * winding + 1);
    let target = -FRAC_PI_2 + m * gamma;
    let principal = z.arg();
    let theta = principal + 2.0 * PI * ((target - principal) / (2.0 * PI)).round();
    let exponent = Rational64::new(-i64::from(winding), 2 * i64::from(winding) + 1);
    let e = *exponent.numer() as f64 / *exponent.denom() as f64;
    Ok(Complex64::from_polar(modulus.powf(e), e * theta))
}

/// `ψ(r) = z^{-N/(2N+1)} φ(z)` along a γ-parametrized spiral given as
/// `(γ, z)` samples.
pub fn wavefunction_pullback(
    path: &[(f64, Complex64)],
    phi: &[Complex64],
    winding: u32,
) -> Result<Vec<Complex64>, ModelError> {
    if path.len() != phi.len() {
        return Err(ModelError::LengthMismatch {
            values: phi.len(),
            points: path.len(),
        });
    }
    path.iter()
        .zip(phi)
        .enumerate()
        .map(|(k, (&(gamma, z), &f))| {
            pullback_factor(gamma, z, winding)
                .map(|w| w * f)
                .map_err(|e| relabel_origin(e, k))
        })
        .collect()
}

/// Inverse of [`wavefunction_pullback`].
pub fn wavefunction_pushforward(
    path: &[(f64, Complex64)],
    psi: &[Complex64],
    winding: u32,
) -> Result<Vec<Complex64>, ModelError> {
    if path.len() != psi.len() {
        return Err(ModelError::LengthMismatch {
            values: psi.len(),
            points: path.len(),
        });
    }
    path.iter()
        .zip(psi)
        .enumerate()
        .map(|(k, (&(gamma, z), &f))| {
            pullback_factor(gamma, z, winding)
                .map(|w| f / w)
                .map_err(|e| relabel_origin(e, k))
        })
        .collect()
}

fn relabel_origin(e: ContourError, k: usize) -> ModelError {
    match e {
        ContourError::PathThroughOrigin(_) => ContourError::PathThroughOrigin(k).into(),
        other => other.into(),
    }
}

/// On-disk model description (TOML).
///
/// ```toml
/// ell = 0.0
/// omega = 1.0                        # optional, sets the z^2 coefficient
/// coeffs = [[3, 0.0, 1.0]]           # [k, re, im] triples for c_k z^k
/// winding = 1
/// epsilon = 0.1
/// convention = "substitution"        # optional: "substitution" | "printed"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub ell: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default)]
    pub coeffs: Vec<(u32, f64, f64)>,
    #[serde(default)]
    pub winding: u32,
    pub epsilon: f64,
    #[serde(default)]
    pub convention: BranchConvention,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::InvalidFile(e.to_string()))
    }

    pub fn model(&self) -> Result<ModelSpec, ModelError> {
        let mut spec = ModelSpec::new(self.ell)?;
        for &(k, re, im) in &self.coeffs {
            spec = spec.with_term(k, c64(re, im))?;
        }
        if let Some(omega) = self.omega {
            spec = spec.with_omega(omega)?;
        }
        Ok(spec)
    }

    pub fn contour(&self) -> Result<ContourSpec, ModelError> {
        Ok(ContourSpec::new(self.epsilon, self.winding)?)
    }

    pub fn rectified(&self) -> Result<RectifiedModel, ModelError> {
        Ok(rectify_model(&self.model()?, self.winding, self.convention))
    }
}
