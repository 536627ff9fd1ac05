//! Periodic LQR through repeated backward Riccati sweeps, and monodromy analysis.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::spline::MatrixSpline;

use super::ltv::{gramian, integrate_matrix, matrix_header, row_major, LtvModel};

pub const RICCATI_TOL: f64 = 1e-8;
pub const RICCATI_MAX_SWEEPS: usize = 50;
/// Gramian eigenvalue below which a model is treated as uncontrollable.
pub const CONTROLLABILITY_TOL: f64 = 1e-6;
const FLOW_TOL: f64 = 1e-11;

/// Feedback gains `K(τ)` (input `w = K ρ`) and the Riccati solution on the model grid.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    pub t0: f64,
    pub period: f64,
    pub k: Vec<DMatrix<f64>>,
    pub p: Vec<DMatrix<f64>>,
    pub sweeps: usize,
    spline: MatrixSpline,
}

impl GainSchedule {
    pub fn new(t0: f64, period: f64, k: Vec<DMatrix<f64>>, p: Vec<DMatrix<f64>>, sweeps: usize) -> Self {
        let spline = MatrixSpline::new(t0, period, &k);
        Self { t0, period, k, p, sweeps, spline }
    }

    /// All-zero gains on the model grid (open loop).
    pub fn zeros(model: &LtvModel) -> Self {
        let (n, m) = (model.state_dim(), model.input_dim());
        let k = vec![DMatrix::zeros(m, n); model.grid_len()];
        let p = vec![DMatrix::zeros(n, n); model.grid_len()];
        Self::new(model.t0, model.period, k, p, 0)
    }

    /// `K(τ)` by periodic cubic interpolation between nodes.
    pub fn eval(&self, tau: f64) -> DMatrix<f64> {
        self.spline.eval(tau)
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.k.len();
        (0..n).map(|i| self.t0 + self.period * i as f64 / n as f64).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.k.iter().map(|k| k.amax()).fold(0.0, f64::max)
    }

    /// One row per grid node: `tau,k11..kmn`, row-major.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let (m, n) = self.k[0].shape();
        let mut header = vec!["tau".to_string()];
        header.extend(matrix_header('k', m, n));
        writeln!(w, "{}", header.join(","))?;
        for (i, t) in self.grid().into_iter().enumerate() {
            let mut row = vec![fmt_f64(t)];
            row.extend(row_major(&self.k[i]).map(fmt_f64));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn riccati_rhs(model: &LtvModel, q: &DMatrix<f64>, r_inv: &DMatrix<f64>, t: f64, p: &DMatrix<f64>) -> DMatrix<f64> {
    let a = model.a_at(t);
    let b = model.b_at(t);
    let pb = p * &b;
    // Ṗ = −(AᵀP + PA − P B R⁻¹ Bᵀ P + Q)
    -(a.transpose() * p + p * &a - &pb * r_inv * pb.transpose() + q)
}

fn check_weights(model: &LtvModel, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = (model.state_dim(), model.input_dim());
    if q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Precondition(format!("weights must be {n}×{n} and {m}×{m}")));
    }
    if (q - q.transpose()).amax() > 1e-12 || (r - r.transpose()).amax() > 1e-12 {
        return Err(Error::Precondition("weights must be symmetric".into()));
    }
    if q.clone().symmetric_eigen().eigenvalues.min() < -1e-12 {
        return Err(Error::Precondition("Q must be positive semidefinite".into()));
    }
    r.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Precondition("R must be positive definite".into()))
}

/// Periodic solution of the Riccati differential equation by backward sweeps over
/// the period, started from `P = Q` and repeated until the period map reaches a fixed
/// point; gains are `K = −R⁻¹ Bᵀ P`.
pub fn periodic_lqr(model: &LtvModel, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<GainSchedule> {
    let r_inv = check_weights(model, q, r)?;
    let min_eig = gramian(model)?.min_eigenvalue();
    if min_eig <= CONTROLLABILITY_TOL {
        return Err(Error::NotControllable { min_eig });
    }
    let n = model.state_dim();
    let (t0, t1) = (model.t0, model.t0 + model.period);
    let rhs = |t: f64, p: &DMatrix<f64>| riccati_rhs(model, q, &r_inv, t, p);

    let mut p_end = q.clone();
    let mut sweeps = 0;
    let mut mismatch = f64::INFINITY;
    while sweeps < RICCATI_MAX_SWEEPS {
        sweeps += 1;
        let p_start = integrate_matrix(n, n, &p_end, t1, t0, FLOW_TOL, rhs)?;
        let p_start = (&p_start + p_start.transpose()) * 0.5;
        mismatch = (&p_start - &p_end).amax();
        p_end = p_start;
        if mismatch < RICCATI_TOL {
            break;
        }
    }
    if mismatch >= RICCATI_TOL {
        return Err(Error::RiccatiNoConvergence { sweeps, mismatch });
    }

    // Final sweep node by node to sample P on the grid.
    let grid = model.grid();
    let len = grid.len();
    let mut p_nodes = vec![DMatrix::zeros(n, n); len];
    let mut p = p_end.clone();
    let mut t = t1;
    for i in (0..len).rev() {
        p = integrate_matrix(n, n, &p, t, grid[i], FLOW_TOL, rhs)?;
        p = (&p + p.transpose()) * 0.5;
        t = grid[i];
        p_nodes[i] = p.clone();
    }
    let k = p_nodes
        .iter()
        .enumerate()
        .map(|(i, p)| -(&r_inv * model.b[i].transpose() * p))
        .collect();
    Ok(GainSchedule::new(model.t0, model.period, k, p_nodes, sweeps))
}

/// Largest `‖Ṗ + AᵀP + PA − PBR⁻¹BᵀP + Q‖∞` over the nodes, with `Ṗ` from periodic
/// fourth-order differences of the sampled `P`.
pub fn riccati_residual(model: &LtvModel, gains: &GainSchedule, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
    let r_inv = check_weights(model, q, r)?;
    let len = gains.p.len();
    let h = model.period / len as f64;
    let grid = model.grid();
    let mut worst: f64 = 0.0;
    for i in 0..len {
        let at = |o: isize| &gains.p[(i as isize + o).rem_euclid(len as isize) as usize];
        let dp = (at(-2) - at(2) + (at(1) - at(-1)) * 8.0) / (12.0 * h);
        let res = dp - riccati_rhs(model, q, &r_inv, grid[i], &gains.p[i]);
        worst = worst.max(res.amax());
    }
    Ok(worst)
}

/// State transition `Φ(t₁, t₀)` of `ẋ = (A + B K) x`.
pub fn transition(model: &LtvModel, gains: Option<&GainSchedule>, t0: f64, t1: f64) -> Result<DMatrix<f64>> {
    let n = model.state_dim();
    let eye = DMatrix::identity(n, n);
    integrate_matrix(n, n, &eye, t0, t1, FLOW_TOL, |t, x| {
        let mut a = model.a_at(t);
        if let Some(g) = gains {
            a += model.b_at(t) * g.eval(t);
        }
        a * x
    })
    .map_err(|e| Error::Integration(format!("monodromy: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub real: f64,
    pub imag: f64,
}

impl Multiplier {
    pub fn abs(&self) -> f64 {
        self.real.hypot(self.imag)
    }
}

impl From<Complex64> for Multiplier {
    fn from(c: Complex64) -> Self {
        Self { real: c.re, imag: c.im }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monodromy {
    pub matrix: DMatrix<f64>,
    /// Floquet multipliers, sorted by decreasing magnitude.
    pub multipliers: Vec<Multiplier>,
    pub spectral_radius: f64,
    pub start: f64,
}

pub fn multipliers_of(m: &DMatrix<f64>) -> Vec<Multiplier> {
    let mut out: Vec<Multiplier> = m.complex_eigenvalues().iter().map(|c| Multiplier::from(*c)).collect();
    out.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.imag.total_cmp(&a.imag)));
    out
}

/// Monodromy over one period starting at `start`.
pub fn monodromy_from(model: &LtvModel, gains: Option<&GainSchedule>, start: f64) -> Result<Monodromy> {
    let matrix = transition(model, gains, start, start + model.period)?;
    let multipliers = multipliers_of(&matrix);
    let spectral_radius = multipliers.first().map_or(0.0, |m| m.abs());
    Ok(Monodromy { matrix, multipliers, spectral_radius, start })
}

/// Monodromy over `[0, T]`; `gains = None` is the open loop.
pub fn monodromy(model: &LtvModel, gains: Option<&GainSchedule>) -> Result<Monodromy> {
    monodromy_from(model, gains, 0.0)
}
