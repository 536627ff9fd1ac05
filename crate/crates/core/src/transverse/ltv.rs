//! Sampled periodic linear time-varying models: transverse linearization through a
//! chart, the full-state and orthogonal-frame linearizations along a trajectory,
//! and the controllability Gramian over one period.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::mech::{eval_accel, MechanicalSystem, PhaseState};
use crate::ode::{dopri5, AdaptiveOptions, Control};
use crate::spline::MatrixSpline;
use crate::trajectory::PeriodicTrajectory;

use super::chart::{chart_invert, TransverseChart};

/// Minimum grid size accepted by [`linearize`].
pub const MIN_GRID: usize = 256;
const RHO_STEP: f64 = 1e-6;
const W_STEP: f64 = 1e-4;
const STATE_STEP: f64 = 1e-6;

/// `ẋ = A(t) x + B(t) w` sampled on a uniform grid over one period.
#[derive(Debug, Clone)]
pub struct LtvModel {
    pub t0: f64,
    pub period: f64,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    a_spline: MatrixSpline,
    b_spline: MatrixSpline,
}

impl LtvModel {
    pub fn new(t0: f64, period: f64, a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.len() != b.len() || a.len() < 3 {
            return Err(Error::Precondition("A and B need the same number (≥ 3) of samples".into()));
        }
        if !(period > 0.0) || !t0.is_finite() {
            return Err(Error::Precondition(format!("invalid period {period}")));
        }
        let (n, m) = (a[0].nrows(), b[0].ncols());
        for (ak, bk) in a.iter().zip(&b) {
            if ak.shape() != (n, n) || bk.shape() != (n, m) {
                return Err(Error::Precondition("inconsistent A/B shapes".into()));
            }
            if ak.iter().chain(bk.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("LTV sample"));
            }
        }
        let a_spline = MatrixSpline::new(t0, period, &a);
        let b_spline = MatrixSpline::new(t0, period, &b);
        Ok(Self { t0, period, a, b, a_spline, b_spline })
    }

    pub fn grid_len(&self) -> usize {
        self.a.len()
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.a.len();
        (0..n).map(|k| self.t0 + self.period * k as f64 / n as f64).collect()
    }

    pub fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b[0].ncols()
    }

    pub fn a_at(&self, t: f64) -> DMatrix<f64> {
        self.a_spline.eval(t)
    }

    pub fn b_at(&self, t: f64) -> DMatrix<f64> {
        self.b_spline.eval(t)
    }

    /// The same model with `B` replaced by zeros (or any other rescaling).
    pub fn with_input_scale(&self, c: f64) -> Result<Self> {
        Self::new(self.t0, self.period, self.a.clone(), self.b.iter().map(|b| b * c).collect())
    }

    /// One row per grid node: `tau,a11..ann,b11..bnm`, matrices row-major.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut header = vec!["tau".to_string()];
        header.extend(matrix_header('a', n, n));
        header.extend(matrix_header('b', n, m));
        writeln!(w, "{}", header.join(","))?;
        for (k, t) in self.grid().into_iter().enumerate() {
            let mut row = vec![fmt_f64(t)];
            row.extend(row_major(&self.a[k]).map(fmt_f64));
            row.extend(row_major(&self.b[k]).map(fmt_f64));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub(crate) fn matrix_header(prefix: char, rows: usize, cols: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(rows * cols);
    for i in 1..=rows {
        for j in 1..=cols {
            out.push(format!("{prefix}{i}{j}"));
        }
    }
    out
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

/// `dρ/dτ` of the closed-loop transverse dynamics with input `u*(τ) + w`.
pub fn transverse_rate(
    chart: &dyn TransverseChart,
    sys: &dyn MechanicalSystem,
    tau: f64,
    rho: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let x = chart_invert(chart, tau, rho)?;
    let u = chart.reference(tau)?.u + w;
    let n = sys.dof();
    let state = PhaseState::from_stacked(x.as_slice());
    let qddot = eval_accel(sys, &state, &u)?;
    let mut xdot = DVector::zeros(2 * n);
    xdot.rows_mut(0, n).copy_from(&state.qdot);
    xdot.rows_mut(n, n).copy_from(&qddot);
    let rates = chart.jacobian(&x)? * xdot;
    let tau_dot = rates[0];
    Ok((rates.rows(1, rates.len() - 1) / tau_dot, tau_dot))
}

/// Central difference of `f` along one coordinate, Richardson-extrapolated once.
/// The step is halved while `τ̇` fails to stay positive.
fn richardson_column<F>(f: F, base_step: f64) -> Result<DVector<f64>>
where
    F: Fn(f64) -> Result<(DVector<f64>, f64)>,
{
    let mut h = base_step;
    for _ in 0..8 {
        let diff = |h: f64| -> Result<Option<DVector<f64>>> {
            let (p, tp) = f(h)?;
            let (m, tm) = f(-h)?;
            if tp <= 0.0 || tm <= 0.0 {
                return Ok(None);
            }
            Ok(Some((p - m) / (2.0 * h)))
        };
        match (diff(h)?, diff(0.5 * h)?) {
            (Some(coarse), Some(fine)) => return Ok((fine * 4.0 - coarse) / 3.0),
            _ => h *= 0.5,
        }
    }
    Err(Error::OutsideTube("phase velocity τ̇ not positive under perturbation".into()))
}

/// Transverse linearization `dρ/dτ = A(τ) ρ + B(τ) w` on `n` uniform nodes of `[−π, π)`.
pub fn linearize(chart: &dyn TransverseChart, sys: &dyn MechanicalSystem, n: usize) -> Result<LtvModel> {
    if n < MIN_GRID {
        return Err(Error::Precondition(format!("grid size {n} below the minimum {MIN_GRID}")));
    }
    let (nr, m) = (chart.rho_dim(), sys.dof() - 1);
    let t0 = -std::f64::consts::PI;
    let period = 2.0 * std::f64::consts::PI;
    let nodes: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let tau = t0 + period * k as f64 / n as f64;
            let zero_rho = DVector::zeros(nr);
            let zero_w = DVector::zeros(m);
            let (_, tau_dot) = transverse_rate(chart, sys, tau, &zero_rho, &zero_w)?;
            if tau_dot <= 0.0 {
                return Err(Error::OutsideTube(format!("τ̇ = {tau_dot} on the orbit at τ = {tau}")));
            }
            let mut a = DMatrix::zeros(nr, nr);
            for j in 0..nr {
                let col = richardson_column(
                    |h| {
                        let mut r = zero_rho.clone();
                        r[j] = h;
                        transverse_rate(chart, sys, tau, &r, &zero_w)
                    },
                    RHO_STEP,
                )?;
                a.set_column(j, &col);
            }
            let mut b = DMatrix::zeros(nr, m);
            for j in 0..m {
                let col = richardson_column(
                    |h| {
                        let mut w = zero_w.clone();
                        w[j] = h;
                        transverse_rate(chart, sys, tau, &zero_rho, &w)
                    },
                    W_STEP,
                )?;
                b.set_column(j, &col);
            }
            Ok((a, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let (a, b) = nodes.into_iter().unzip();
    LtvModel::new(t0, period, a, b)
}

/// Largest `‖f(0, τ, 0)‖∞` over the grid; zero when the orbit is the zero section.
pub fn zero_section_defect(chart: &dyn TransverseChart, sys: &dyn MechanicalSystem, n: usize) -> Result<f64> {
    let (nr, m) = (chart.rho_dim(), sys.dof() - 1);
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let tau = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let (f, _) = transverse_rate(chart, sys, tau, &DVector::zeros(nr), &DVector::zeros(m))?;
        worst = worst.max(f.amax());
    }
    Ok(worst)
}

fn open_loop_field(sys: &dyn MechanicalSystem, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    let n = sys.dof();
    let state = PhaseState::from_stacked(x.as_slice());
    let qddot = eval_accel(sys, &state, u)?;
    let mut out = DVector::zeros(2 * n);
    out.rows_mut(0, n).copy_from(&state.qdot);
    out.rows_mut(n, n).copy_from(&qddot);
    Ok(out)
}

/// Jacobians of `(q̇, q̈)` with respect to the state and the input at `(x, u)`.
pub fn state_jacobians(
    sys: &dyn MechanicalSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dim = x.len();
    let m = u.len();
    let rich = |g: &dyn Fn(f64) -> Result<DVector<f64>>, h: f64| -> Result<DVector<f64>> {
        let d = |h: f64| -> Result<DVector<f64>> { Ok((g(h)? - g(-h)?) / (2.0 * h)) };
        Ok((d(0.5 * h)? * 4.0 - d(h)?) / 3.0)
    };
    let mut a = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let g = |h: f64| {
            let mut y = x.clone();
            y[j] += h;
            open_loop_field(sys, &y, u)
        };
        a.set_column(j, &rich(&g, STATE_STEP)?);
    }
    let mut b = DMatrix::zeros(dim, m);
    for j in 0..m {
        let g = |h: f64| {
            let mut v = u.clone();
            v[j] += h;
            open_loop_field(sys, x, &v)
        };
        b.set_column(j, &rich(&g, STATE_STEP)?);
    }
    Ok((a, b))
}

fn grid_points(traj: &PeriodicTrajectory, n: usize) -> Result<Vec<crate::trajectory::TrajectoryPoint>> {
    (0..n)
        .into_par_iter()
        .map(|k| traj.point(traj.period * k as f64 / n as f64))
        .collect()
}

/// Linearization of the full state along the trajectory, `δẋ = A_f δx + B_f δu`,
/// sampled on `n` nodes of `[0, T)`.
pub fn full_linearization(sys: &dyn MechanicalSystem, traj: &PeriodicTrajectory, n: usize) -> Result<LtvModel> {
    let pts = grid_points(traj, n)?;
    let ab = pts
        .par_iter()
        .map(|p| state_jacobians(sys, &DVector::from_vec(p.phase_state().to_vec()), &p.u))
        .collect::<Result<Vec<_>>>()?;
    let (a, b) = ab.into_iter().unzip();
    LtvModel::new(0.0, traj.period, a, b)
}

/// Orthonormal basis of the hyperplane orthogonal to `v`, obtained from a fixed basis
/// of `d⊥` through the Householder reflection that maps `d` onto `v̂`.
fn hyperplane_basis(v: &DVector<f64>, d: &DVector<f64>, d_perp: &DMatrix<f64>) -> DMatrix<f64> {
    let vhat = v / v.norm();
    let w = d - &vhat;
    let ww = w.dot(&w);
    let mut e = d_perp.clone();
    for mut col in e.column_iter_mut() {
        let c = 2.0 * w.dot(&col) / ww;
        col.axpy(-c, &w, 1.0);
    }
    e
}

/// Transverse linearization in a moving orthonormal frame `E(t)` of the hyperplanes
/// orthogonal to the orbit velocity: `A⊥ = Eᵀ A_f E − Eᵀ Ė`, `B⊥ = Eᵀ B_f`.
///
/// Works for any trajectory whose phase velocity never vanishes; `Ė` comes from
/// periodic fourth-order differences on the grid.
pub fn orthogonal_linearization(
    sys: &dyn MechanicalSystem,
    traj: &PeriodicTrajectory,
    n: usize,
) -> Result<LtvModel> {
    if n < 16 {
        return Err(Error::Precondition("grid too coarse for the frame derivative".into()));
    }
    let full = full_linearization(sys, traj, n)?;
    let pts = grid_points(traj, n)?;
    let dim = 2 * sys.dof();
    let vel: Vec<DVector<f64>> = pts
        .iter()
        .map(|p| {
            let mut v = DVector::zeros(dim);
            v.rows_mut(0, dim / 2).copy_from(&p.qdot);
            v.rows_mut(dim / 2, dim / 2).copy_from(&p.qddot);
            v
        })
        .collect();
    if let Some(k) = vel.iter().position(|v| v.norm() < 1e-9) {
        return Err(Error::Precondition(format!("phase velocity vanishes at node {k}")));
    }
    // Reflect from the signed coordinate axis that stays farthest from the velocity
    // direction, so the frame is smooth over the whole period.
    let mut best: Option<(f64, DVector<f64>)> = None;
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut d = DVector::zeros(dim);
            d[i] = sign;
            let gap = vel.iter().map(|v| (&d - v / v.norm()).norm()).fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|(g, _)| gap > *g) {
                best = Some((gap, d));
            }
        }
    }
    let (gap, d) = best.expect("non-empty state");
    if gap < 1e-3 {
        return Err(Error::Precondition("no reference direction keeps the orthogonal frame smooth".into()));
    }
    let axis = d.iamax();
    let d_perp = DMatrix::from_columns(
        &(0..dim)
            .filter(|&i| i != axis)
            .map(|i| {
                let mut e = DVector::zeros(dim);
                e[i] = 1.0;
                e
            })
            .collect::<Vec<_>>(),
    );
    let frames: Vec<DMatrix<f64>> = vel.iter().map(|v| hyperplane_basis(v, &d, &d_perp)).collect();
    let h = traj.period / n as f64;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for k in 0..n {
        let e = &frames[k];
        let at = |o: isize| &frames[(k as isize + o).rem_euclid(n as isize) as usize];
        let de = (at(-2) - at(2) + (at(1) - at(-1)) * 8.0) / (12.0 * h);
        let et = e.transpose();
        a.push(&et * &full.a[k] * e - &et * de);
        b.push(&et * &full.b[k]);
    }
    LtvModel::new(0.0, traj.period, a, b)
}

/// Integrates a matrix ODE `X′ = F(t, X)` with flattened column-major storage.
pub(crate) fn integrate_matrix<F>(
    rows: usize,
    cols: usize,
    x0: &DMatrix<f64>,
    t0: f64,
    t1: f64,
    rtol: f64,
    rhs: F,
) -> Result<DMatrix<f64>>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    let opts = AdaptiveOptions { rtol, atol: rtol, ..AdaptiveOptions::default() };
    let f = |t: f64, y: &[f64], dy: &mut [f64]| {
        let x = DMatrix::from_column_slice(rows, cols, y);
        dy.copy_from_slice(rhs(t, &x).as_slice());
    };
    let out = dopri5(f, t0, x0.as_slice(), t1, &opts, None, &mut |_, _| Control::Continue)?;
    if out.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration(format!("non-finite matrix flow on [{t0}, {t1}]")));
    }
    Ok(DMatrix::from_column_slice(rows, cols, &out.y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gramian {
    pub matrix: DMatrix<f64>,
    /// Eigenvalues of the symmetrized Gramian, largest first.
    pub eigenvalues: Vec<f64>,
    /// Asymmetry `‖W − Wᵀ‖∞` before symmetrization.
    pub asymmetry: f64,
    pub start: f64,
}

impl Gramian {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Tolerance of the Gramian integration.
pub const GRAMIAN_TOL: f64 = 1e-10;

/// `W = ∫ Φ(s₀, s) B(s) Bᵀ(s) Φᵀ(s₀, s) ds` over one period from `s₀ = start`, via
/// `X′ = −X A` (so `X(s) = Φ(s₀, s)`) and `W′ = X B Bᵀ Xᵀ`.
pub fn gramian_from(model: &LtvModel, start: f64) -> Result<Gramian> {
    let n = model.state_dim();
    let mut y0 = DMatrix::zeros(n, 2 * n);
    y0.columns_mut(0, n).fill_with_identity();
    let out = integrate_matrix(n, 2 * n, &y0, start, start + model.period, GRAMIAN_TOL, |s, y| {
        let x = y.columns(0, n);
        let a = model.a_at(s);
        let b = model.b_at(s);
        let xb = x * b;
        let mut dy = DMatrix::zeros(n, 2 * n);
        dy.columns_mut(0, n).copy_from(&(-(x * a)));
        dy.columns_mut(n, n).copy_from(&(&xb * xb.transpose()));
        dy
    })
    .map_err(|e| Error::Integration(format!("Gramian: {e}")))?;
    let w = out.columns(n, n).into_owned();
    let asymmetry = (&w - w.transpose()).amax();
    let matrix = (&w + w.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = matrix.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(Gramian { matrix, eigenvalues, asymmetry, start })
}

/// Gramian over `[0, T]`.
pub fn gramian(model: &LtvModel) -> Result<Gramian> {
    gramian_from(model, 0.0)
}
