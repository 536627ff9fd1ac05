//! Euler–Lagrange systems `M(q) q̈ + C(q, q̇) q̇ + G(q) = B(q) u` with one degree of
//! underactuation, and the planar VTOL aircraft with its tic-toc reference motion.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Relative singular-value threshold below which `B(q)` is treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

pub trait MechanicalSystem: Send + Sync {
    /// Configuration dimension `n`; the input dimension is `n - 1`.
    fn dof(&self) -> usize;

    fn name(&self) -> &str {
        "custom"
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;
    fn coriolis(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64>;
    fn gravity(&self, q: &DVector<f64>) -> DVector<f64>;
    fn input_map(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// Unit-norm row vector annihilating `B(q)` from the left, oriented so that
    /// `det([B⊥ᵀ | B(q)]) > 0`.
    fn left_annihilator(&self, q: &DVector<f64>) -> Result<RowDVector<f64>> {
        orthogonal_left_annihilator(&self.input_map(q))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl PhaseState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Result<Self> {
        if q.len() != qdot.len() {
            return Err(Error::Precondition(format!(
                "q has {} entries but q̇ has {}",
                q.len(),
                qdot.len()
            )));
        }
        if q.iter().chain(qdot.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phase state"));
        }
        Ok(Self { q, qdot })
    }

    pub fn from_slices(q: &[f64], qdot: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(q), DVector::from_column_slice(qdot))
    }

    /// Stacked `(q, q̇)`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.q.iter().chain(self.qdot.iter()).copied().collect()
    }

    pub fn from_stacked(x: &[f64]) -> Self {
        let n = x.len() / 2;
        Self {
            q: DVector::from_column_slice(&x[..n]),
            qdot: DVector::from_column_slice(&x[n..]),
        }
    }
}

/// B⊥ from the orthogonal complement of `Im B`: the left singular vector of `[B | 0]`
/// belonging to the zero singular value.
pub fn orthogonal_left_annihilator(b: &DMatrix<f64>) -> Result<RowDVector<f64>> {
    let (n, m) = b.shape();
    if m + 1 != n {
        return Err(Error::ModelInvariant(format!("input map is {n}x{m}, expected {n}x{}", n - 1)));
    }
    check_full_rank(b)?;
    let mut padded = DMatrix::zeros(n, n);
    padded.columns_mut(0, m).copy_from(b);
    let svd = padded.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let mut v = u.column(idx).transpose();
    let mut oriented = DMatrix::zeros(n, n);
    oriented.set_column(0, &v.transpose());
    oriented.columns_mut(1, m).copy_from(b);
    if oriented.determinant() < 0.0 {
        v = -v;
    }
    let norm = v.norm();
    Ok(v / norm)
}

fn check_full_rank(b: &DMatrix<f64>) -> Result<()> {
    let (_, m) = b.shape();
    let sv = b.singular_values();
    let max = sv.max();
    let rank = sv.iter().filter(|s| **s > RANK_TOL * max.max(f64::MIN_POSITIVE)).count();
    if max == 0.0 || rank < m {
        return Err(Error::RankDeficient { rank: if max == 0.0 { 0 } else { rank }, expected: m });
    }
    Ok(())
}

/// Solves `M q̈ = B u − C q̇ − G`.
pub fn eval_accel(sys: &dyn MechanicalSystem, s: &PhaseState, u: &DVector<f64>) -> Result<DVector<f64>> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input"));
    }
    if s.q.iter().chain(s.qdot.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("phase state"));
    }
    let m = sys.mass_matrix(&s.q);
    let rhs = sys.input_map(&s.q) * u - sys.coriolis(&s.q, &s.qdot) * &s.qdot - sys.gravity(&s.q);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::ModelInvariant("mass matrix is not symmetric positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecovery {
    pub u: DVector<f64>,
    /// `|B⊥ (M q̈ + C q̇ + G)|`; zero iff the motion is dynamically consistent.
    pub residual: f64,
}

/// Least-squares feedforward recovery from a prescribed motion.
pub fn inverse_input(
    sys: &dyn MechanicalSystem,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    qddot: &DVector<f64>,
) -> Result<InputRecovery> {
    let b = sys.input_map(q);
    check_full_rank(&b)?;
    let lhs = sys.mass_matrix(q) * qddot + sys.coriolis(q, qdot) * qdot + sys.gravity(q);
    let bt = b.transpose();
    let normal = &bt * &b;
    let u = normal
        .cholesky()
        .ok_or(Error::RankDeficient { rank: 0, expected: b.ncols() })?
        .solve(&(&bt * &lhs));
    let bperp = sys.left_annihilator(q)?;
    let residual = (bperp * &lhs)[0].abs();
    Ok(InputRecovery { u, residual })
}

pub fn left_annihilator(sys: &dyn MechanicalSystem, q: &DVector<f64>) -> Result<RowDVector<f64>> {
    sys.left_annihilator(q)
}

/// Euclidean distance from `G(q)` to `Im B(q)`, through the orthogonal projector.
pub fn gravity_distance(sys: &dyn MechanicalSystem, q: &DVector<f64>) -> Result<f64> {
    let b = sys.input_map(q);
    check_full_rank(&b)?;
    let g = sys.gravity(q);
    let bt = b.transpose();
    let inv = (&bt * &b)
        .try_inverse()
        .ok_or(Error::RankDeficient { rank: 0, expected: b.ncols() })?;
    let proj = &b * inv * bt;
    Ok((&g - proj * &g).norm())
}

/// Planar VTOL aircraft with zero coupling: `ẍ = −sin ψ u₁`, `z̈ = cos ψ u₁ − 1`,
/// `ψ̈ = u₂`, with `q = (x, z, ψ)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pvtol;

pub fn pvtol_model() -> Pvtol {
    Pvtol
}

impl MechanicalSystem for Pvtol {
    fn dof(&self) -> usize {
        3
    }

    fn name(&self) -> &str {
        "pvtol"
    }

    fn mass_matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(3, 3)
    }

    fn coriolis(&self, _q: &DVector<f64>, _qdot: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(3, 3)
    }

    fn gravity(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::from_column_slice(&[0.0, 1.0, 0.0])
    }

    fn input_map(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (s, c) = q[2].sin_cos();
        DMatrix::from_row_slice(3, 2, &[-s, 0.0, c, 0.0, 0.0, 1.0])
    }

    fn left_annihilator(&self, q: &DVector<f64>) -> Result<RowDVector<f64>> {
        let (s, c) = q[2].sin_cos();
        Ok(RowDVector::from_row_slice(&[c, s, 0.0]))
    }
}

/// A point of the tic-toc reference motion with analytic derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TicTocPoint {
    pub t: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub qddot: DVector<f64>,
    pub u: DVector<f64>,
}

/// The tic-toc maneuver: `x = sin t`, `z = −½ sin²t`, `ψ = π/2 − arctan(2 sin t)`.
pub fn tic_toc_reference(t: f64) -> TicTocPoint {
    let (s, c) = t.sin_cos();
    let d = 1.0 + 4.0 * s * s;
    let q = DVector::from_column_slice(&[s, -0.5 * s * s, FRAC_PI_2 - (2.0 * s).atan()]);
    let qdot = DVector::from_column_slice(&[c, -s * c, -2.0 * c / d]);
    let qddot = DVector::from_column_slice(&[
        -s,
        -(2.0 * t).cos(),
        2.0 * s * (9.0 - 4.0 * s * s) / (d * d),
    ]);
    let u1 = s * d.sqrt();
    let u2 = (12.0 * s + 2.0 * (3.0 * t).sin()) / (3.0 - 2.0 * (2.0 * t).cos()).powi(2);
    TicTocPoint { t, q, qdot, qddot, u: DVector::from_column_slice(&[u1, u2]) }
}
