//! Finite-difference discretization of the rectified problem on the line
//! `r = x - iε`.
//!
//! The grid has `n` interior points `x_j = -X + j h`, `h = 2X/(n+1)`, with
//! Dirichlet walls at `±X`. Because the points are symmetric about zero the
//! parity `x -> -x` is the exact index reversal `j -> n-1-j`.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::CMat;
use crate::model::RectifiedModel;
use crate::par::{self, Exec};
use crate::c64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiscreteError {
    #[error("grid needs at least 3 interior points, got {0}")]
    TooFewPoints(usize),
    #[error("half width must be positive and finite, got {0}")]
    BadHalfWidth(f64),
    #[error("shift epsilon must be non-negative and finite, got {0}")]
    BadEpsilon(f64),
    #[error("epsilon = 0 puts a grid point on the singular term r^{power}")]
    SingularSample { power: String },
    #[error("weight vanishes at grid point {0}")]
    SingularWeight(usize),
    #[error("no half width up to {0} reaches the requested potential wall")]
    WallNotReached(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    half_width: f64,
    n: usize,
    epsilon: f64,
}

impl GridSpec {
    /// `epsilon = 0` is accepted here and only rejected by
    /// [`build_operators`] when the model is singular at the origin.
    pub fn new(half_width: f64, n: usize, epsilon: f64) -> Result<Self, DiscreteError> {
        if n < 3 {
            return Err(DiscreteError::TooFewPoints(n));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(DiscreteError::BadHalfWidth(half_width));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(DiscreteError::BadEpsilon(epsilon));
        }
        Ok(Self {
            half_width,
            n,
            epsilon,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n as f64 + 1.0)
    }

    /// `x_j` for the zero-based index `j` (the `j+1`-th interior point).
    pub fn x(&self, j: usize) -> f64 {
        // Symmetric evaluation so that x(j) == -x(n-1-j) bit for bit.
        let h = self.spacing();
        let centre = (self.n as f64 - 1.0) / 2.0;
        (j as f64 - centre) * h
    }

    pub fn r(&self, j: usize) -> Complex64 {
        c64(self.x(j), -self.epsilon)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }
}

/// Dense `H`, diagonal `W` and the grid they live on.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    pub h: CMat,
    pub w: Vec<Complex64>,
    pub grid: GridSpec,
}

impl OperatorPair {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn w_matrix(&self) -> CMat {
        crate::linalg::diag(&self.w)
    }

    /// The reversal permutation as a dense matrix.
    pub fn parity(&self) -> CMat {
        parity_matrix(self.n())
    }

    /// `max|W_jj| / min|W_jj|`
    pub fn weight_condition(&self) -> f64 {
        let (lo, hi) = self
            .w
            .iter()
            .map(|w| w.norm())
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), a| (lo.min(a), hi.max(a)));
        hi / lo
    }
}

pub fn parity_matrix(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| {
        if i + j + 1 == n {
            c64(1.0, 0.0)
        } else {
            c64(0.0, 0.0)
        }
    })
}

pub fn apply_parity(v: &[Complex64]) -> Vec<Complex64> {
    v.iter().rev().copied().collect()
}

pub fn build_operators(model: &RectifiedModel, grid: &GridSpec) -> Result<OperatorPair, DiscreteError> {
    build_operators_with(model, grid, Exec::default())
}

pub fn build_operators_with(
    model: &RectifiedModel,
    grid: &GridSpec,
    exec: Exec,
) -> Result<OperatorPair, DiscreteError> {
    if grid.epsilon == 0.0 {
        if let Some(p) = model.terms.keys().find(|p| **p < 0.into()) {
            return Err(DiscreteError::SingularSample { power: p.to_string() });
        }
    }
    let n = grid.n;
    let h = grid.spacing();
    let kinetic = 1.0 / (h * h);
    let rows = par::map_range(exec, n, |j| {
        let r = grid.r(j);
        (model.potential(r) + 2.0 * kinetic, model.weight(r))
    });
    if let Some(j) = rows.iter().position(|(_, w)| *w == c64(0.0, 0.0) || !w.is_finite()) {
        return Err(DiscreteError::SingularWeight(j));
    }
    let off = c64(-kinetic, 0.0);
    let hmat = Mat::from_fn(n, n, |i, j| {
        if i == j {
            rows[i].0
        } else if i.abs_diff(j) == 1 {
            off
        } else {
            c64(0.0, 0.0)
        }
    });
    Ok(OperatorPair {
        h: hmat,
        w: rows.into_iter().map(|(_, w)| w).collect(),
        grid: *grid,
    })
}

/// `max(‖PHP - H†‖, ‖PWP - W†‖) / (‖H‖ + ‖W‖)`, Frobenius norms.
pub fn pt_residual(pair: &OperatorPair) -> f64 {
    let n = pair.n();
    let mut dh = 0.0;
    let mut nh = 0.0;
    for i in 0..n {
        for j in 0..n {
            let a = pair.h[(n - 1 - i, n - 1 - j)];
            let b = pair.h[(j, i)].conj();
            dh += (a - b).norm_sqr();
            nh += pair.h[(i, j)].norm_sqr();
        }
    }
    let mut dw = 0.0;
    let mut nw = 0.0;
    for i in 0..n {
        dw += (pair.w[n - 1 - i] - pair.w[i].conj()).norm_sqr();
        nw += pair.w[i].norm_sqr();
    }
    dh.sqrt().max(dw.sqrt()) / (nh.sqrt() + nw.sqrt())
}

/// Smallest half width `X` (to within 1%) such that the rectified potential
/// at both ends `±X - iε` has modulus at least `factor * e_max`.
///
/// The truncation rule is a heuristic: the eigenfunctions only need to have
/// decayed at the walls, and a potential much larger than the energies of
/// interest is a cheap proxy for that.
pub fn wall_half_width(
    model: &RectifiedModel,
    epsilon: f64,
    e_max: f64,
    factor: f64,
) -> Result<f64, DiscreteError> {
    const LIMIT: f64 = 1e6;
    let target = factor * e_max.abs().max(1.0);
    let ok = |x: f64| {
        let left = model.potential(c64(-x, -epsilon)).norm();
        let right = model.potential(c64(x, -epsilon)).norm();
        left.min(right) >= target
    };
    let mut hi = 1.0;
    while !ok(hi) {
        hi *= 2.0;
        if hi > LIMIT {
            return Err(DiscreteError::WallNotReached(LIMIT));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 0.01 * hi {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rectify_model, BranchConvention, ModelSpec};
    use crate::I;

    fn rect(spec: &ModelSpec, n: u32) -> RectifiedModel {
        rectify_model(spec, n, BranchConvention::Substitution)
    }

    #[test]
    fn free_laplacian_small() {
        let model = rect(&ModelSpec::new(0.0).unwrap(), 0);
        let grid = GridSpec::new(2.0, 3, 0.0).unwrap();
        assert_eq!(grid.spacing(), 1.0);
        assert_eq!(grid.points(), vec![-1.0, 0.0, 1.0]);
        let pair = build_operators(&model, &grid).unwrap();
        let expected = [[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(pair.h[(i, j)], c64(expected[i][j], 0.0));
            }
        }
        assert!(pair.w.iter().all(|w| *w == c64(1.0, 0.0)));
    }

    #[test]
    fn quadratic_diagonal_at_origin() {
        let model = rect(&ModelSpec::new(0.0).unwrap().with_term(2, c64(1.0, 0.0)).unwrap(), 0);
        let grid = GridSpec::new(3.0, 5, 1.0).unwrap();
        let pair = build_operators(&model, &grid).unwrap();
        let h = grid.spacing();
        assert_eq!(grid.x(2), 0.0);
        assert!((pair.h[(2, 2)] - c64(2.0 / (h * h) - 1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn single_winding_weight_at_origin() {
        let model = rect(&ModelSpec::cubic_toboggan(0.0, 0.0).unwrap(), 1);
        let grid = GridSpec::new(2.0, 7, 0.5).unwrap();
        let pair = build_operators(&model, &grid).unwrap();
        assert!((pair.w[3] - c64(0.5625, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert_eq!(GridSpec::new(1.0, 2, 0.5), Err(DiscreteError::TooFewPoints(2)));
        assert!(GridSpec::new(-1.0, 10, 0.5).is_err());
        assert!(GridSpec::new(1.0, 10, -0.5).is_err());
        let spiked = rect(&ModelSpec::new(0.3).unwrap().with_term(2, c64(1.0, 0.0)).unwrap(), 0);
        let flat = GridSpec::new(3.0, 20, 0.0).unwrap();
        assert!(matches!(
            build_operators(&spiked, &flat),
            Err(DiscreteError::SingularSample { .. })
        ));
        // Odd n puts x = 0 on the grid, where W = 9 r^4 vanishes at ε = 0;
        // the L(L+1)/r^2 term is caught first.
        let tob = rect(&ModelSpec::cubic_toboggan(0.0, 0.0).unwrap(), 1);
        assert!(build_operators(&tob, &GridSpec::new(1.0, 11, 0.0).unwrap()).is_err());
    }

    #[test]
    fn grid_is_exactly_symmetric() {
        for n in [3, 4, 57, 1000] {
            let g = GridSpec::new(7.3, n, 0.2).unwrap();
            for j in 0..n {
                assert_eq!(g.x(j), -g.x(n - 1 - j));
            }
            assert!((g.x(0) - (-7.3 + g.spacing())).abs() < 1e-12);
        }
    }

    #[test]
    fn parity_is_an_involution() {
        let p = parity_matrix(6);
        let p2 = &p * &p;
        assert_eq!(p2, crate::linalg::identity(6));
    }

    #[test]
    fn pt_residuals() {
        let bb = rect(&ModelSpec::new(0.0).unwrap().with_term(2, c64(1.0, 0.0)).unwrap().with_term(1, I).unwrap(), 0);
        let grid = GridSpec::new(5.0, 40, 0.3).unwrap();
        assert!(pt_residual(&build_operators(&bb, &grid).unwrap()) < 1e-14);

        let broken = rect(&ModelSpec::new(0.0).unwrap().with_term(2, c64(1.0, 0.0)).unwrap().with_term(1, c64(1.0, 0.0)).unwrap(), 0);
        assert!(pt_residual(&build_operators(&broken, &grid).unwrap()) > 1e-2);

        let free = rect(&ModelSpec::new(0.0).unwrap(), 0);
        assert!(pt_residual(&build_operators(&free, &grid).unwrap()) < 1e-15);

        let tob = rect(&ModelSpec::cubic_toboggan(0.4, 1.0).unwrap(), 1);
        assert!(pt_residual(&build_operators(&tob, &GridSpec::new(2.0, 64, 0.1).unwrap()).unwrap()) < 1e-14);
    }

    #[test]
    fn sequential_and_parallel_builds_agree() {
        let tob = rect(&ModelSpec::cubic_toboggan(0.2, 0.5).unwrap(), 2);
        let grid = GridSpec::new(1.5, 33, 0.1).unwrap();
        let a = build_operators_with(&tob, &grid, Exec::Sequential).unwrap();
        let b = build_operators_with(&tob, &grid, Exec::default()).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!(a.w, b.w);
    }

    #[test]
    fn wall_heuristic_for_oscillator() {
        let ho = rect(&ModelSpec::new(0.0).unwrap().with_omega(1.0).unwrap(), 0);
        let x = wall_half_width(&ho, 0.0, 10.0, 1e3).unwrap();
        assert!((100.0..102.0).contains(&x), "{x}");
        let pair = build_operators(&ho, &GridSpec::new(4.0, 9, 0.5).unwrap()).unwrap();
        assert_eq!(pair.weight_condition(), 1.0);
    }
}
