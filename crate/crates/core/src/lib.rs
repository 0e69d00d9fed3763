//! Rectified quantum-toboggan eigenproblems.
//!
//! A Schrödinger equation posed along a spiral contour that winds `N` times
//! around the branch point at the origin is mapped, by the change of
//! variables `i r = (i z)^(1/(2N+1))`, onto a straight complex-shifted line
//! `r = x - iε`. The price is a weight operator: the rectified equation reads
//! `H ψ = E W ψ`. This crate
//!
//! * builds the spiral and straight contours and the map between them
//!   ([`contour`]),
//! * rectifies polynomial-plus-centrifugal models ([`model`]),
//! * discretizes the rectified problem into dense complex matrices
//!   ([`discrete`]),
//! * solves the generalized eigenproblem for right kets and left double-kets
//!   and checks biorthogonality, completeness and spectral rebuild
//!   ([`spectra`]),
//! * assembles the metric operator `Θ` from the double series with
//!   `M = S⁻¹` and measures quasi-Hermiticity and positivity ([`metric`]),
//! * shoots directly along the spiral as an independent cross-check
//!   ([`shoot`]).
//!
//! Data-parallel loops go through [`par`]; with the default `parallel`
//! feature they run on rayon, without it they fall back to plain iterators.

// `!(x > 0.0)` is used on purpose throughout: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contour;
pub mod discrete;
pub mod io;
pub mod linalg;
pub mod metric;
pub mod model;
pub mod par;
pub mod shoot;
pub mod spectra;

pub use num_complex::Complex64;

/// `sqrt(-1)`.
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub(crate) const fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Contour(#[from] contour::ContourError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Discrete(#[from] discrete::DiscreteError),
    #[error(transparent)]
    Spectra(#[from] spectra::SpectraError),
    #[error(transparent)]
    Metric(#[from] metric::MetricError),
    #[error(transparent)]
    Shoot(#[from] shoot::ShootError),
    #[error(transparent)]
    Io(#[from] io::IoError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
