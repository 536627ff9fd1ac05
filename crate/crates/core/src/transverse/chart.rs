//! Transverse coordinates `(τ, ρ)` around a periodic orbit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::mech::{tic_toc_reference, PhaseState};
use crate::trajectory::{TicTocSource, TrajectoryPoint, TrajectorySource};

/// Default tube radius on `‖ρ‖`.
pub const DEFAULT_TUBE_RADIUS: f64 = 1.0;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;

/// A chart `(q, q̇) ↦ (τ, ρ)` near an orbit, with `ρ = 0` on the orbit and `τ` a
/// `2π`-periodic phase on `[−π, π)`.
pub trait TransverseChart: Send + Sync {
    /// Dimension of the phase space `2n`; `ρ` has one fewer component.
    fn state_dim(&self) -> usize;

    fn radius(&self) -> f64;

    /// `(τ, ρ)` of a stacked state `(q, q̇)`.
    fn coordinates(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)>;

    /// Jacobian of `(τ, ρ)` with respect to `(q, q̇)`, `τ` in the first row.
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// The orbit point with phase `τ`, including the nominal input `u*(τ)`.
    fn reference(&self, tau: f64) -> Result<TrajectoryPoint>;

    fn rho_dim(&self) -> usize {
        self.state_dim() - 1
    }
}

/// Maps an angle to `[−π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI { -PI } else { w }
}

/// Chart for the tic-toc orbit: `τ = atan2(x, ẋ)`, `ρ₁,₂ = h(q)`, `ρ₃,₄ = dh(q) q̇`,
/// `ρ₅ = (x − sin τ) sin τ + (ẋ − cos τ) cos τ`.
#[derive(Debug, Clone, Copy)]
pub struct TicTocChart {
    pub radius: f64,
}

impl Default for TicTocChart {
    fn default() -> Self {
        Self { radius: DEFAULT_TUBE_RADIUS }
    }
}

impl TransverseChart for TicTocChart {
    fn state_dim(&self) -> usize {
        6
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn coordinates(&self, s: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        check_state(s, 6)?;
        let (x, z, psi, dx, dz, dpsi) = (s[0], s[1], s[2], s[3], s[4], s[5]);
        if x == 0.0 && dx == 0.0 {
            return Err(Error::OutsideTube("phase undefined at x = ẋ = 0".into()));
        }
        let tau = wrap_angle(x.atan2(dx));
        let (st, ct) = tau.sin_cos();
        let d = 1.0 + 4.0 * x * x;
        let rho = DVector::from_column_slice(&[
            z + 0.5 * x * x,
            psi - FRAC_PI_2 + (2.0 * x).atan(),
            x * dx + dz,
            2.0 * dx / d + dpsi,
            (x - st) * st + (dx - ct) * ct,
        ]);
        Ok((tau, rho))
    }

    fn jacobian(&self, s: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_state(s, 6)?;
        let (x, dx) = (s[0], s[3]);
        let r2 = x * x + dx * dx;
        if r2 == 0.0 {
            return Err(Error::OutsideTube("phase undefined at x = ẋ = 0".into()));
        }
        let r = r2.sqrt();
        let d = 1.0 + 4.0 * x * x;
        #[rustfmt::skip]
        let j = DMatrix::from_row_slice(6, 6, &[
            dx / r2, 0.0, 0.0, -x / r2, 0.0, 0.0,
            x, 1.0, 0.0, 0.0, 0.0, 0.0,
            2.0 / d, 0.0, 1.0, 0.0, 0.0, 0.0,
            dx, 0.0, 0.0, x, 1.0, 0.0,
            -16.0 * x * dx / (d * d), 0.0, 0.0, 2.0 / d, 0.0, 1.0,
            x / r, 0.0, 0.0, dx / r, 0.0, 0.0,
        ]);
        Ok(j)
    }

    fn reference(&self, tau: f64) -> Result<TrajectoryPoint> {
        TicTocSource.point(tau)
    }
}

fn check_state(s: &DVector<f64>, dim: usize) -> Result<()> {
    if s.len() != dim {
        return Err(Error::Precondition(format!("state has {} entries, expected {dim}", s.len())));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransverseCoords {
    pub tau: f64,
    pub rho: DVector<f64>,
    /// `‖ρ‖` is within the chart's tube radius.
    pub inside: bool,
}

impl TransverseCoords {
    pub fn norm(&self) -> f64 {
        self.rho.norm()
    }
}

/// `(τ, ρ)` of a state. States outside the tube are flagged rather than rejected.
pub fn to_transverse(chart: &dyn TransverseChart, state: &PhaseState) -> Result<TransverseCoords> {
    let (tau, rho) = chart.coordinates(&DVector::from_vec(state.to_vec()))?;
    let inside = rho.norm() <= chart.radius();
    Ok(TransverseCoords { tau, rho, inside })
}

/// `‖ρ‖`, or `None` outside the tube.
pub fn orbit_error(chart: &dyn TransverseChart, state: &PhaseState) -> Option<f64> {
    let c = to_transverse(chart, state).ok()?;
    c.inside.then(|| c.norm())
}

fn chart_residual(chart: &dyn TransverseChart, x: &DVector<f64>, tau: f64, rho: &DVector<f64>) -> Result<DVector<f64>> {
    let (t, r) = chart.coordinates(x)?;
    let mut f = DVector::zeros(x.len());
    f[0] = wrap_angle(t - tau);
    f.rows_mut(1, r.len()).copy_from(&(r - rho));
    Ok(f)
}

/// Solves `(τ(x), ρ(x)) = (τ, ρ)` for the stacked state `x` by damped Newton,
/// starting from the orbit point at `τ`.
pub fn chart_invert(chart: &dyn TransverseChart, tau: f64, rho: &DVector<f64>) -> Result<DVector<f64>> {
    if !tau.is_finite() || rho.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transverse coordinates"));
    }
    if rho.len() != chart.rho_dim() {
        return Err(Error::Precondition(format!("ρ has {} entries, expected {}", rho.len(), chart.rho_dim())));
    }
    if rho.norm() > chart.radius() {
        return Err(Error::OutsideTube(format!("‖ρ‖ = {} exceeds the tube radius {}", rho.norm(), chart.radius())));
    }
    let p = chart.reference(tau)?;
    let mut x = DVector::from_vec(PhaseState { q: p.q, qdot: p.qdot }.to_vec());
    let mut f = chart_residual(chart, &x, tau, rho)?;
    let mut norm = f.amax();
    for _ in 0..NEWTON_MAX_ITER {
        if norm < NEWTON_TOL {
            return Ok(x);
        }
        let j = chart.jacobian(&x)?;
        let step = j
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::OutsideTube(format!("singular chart Jacobian at τ = {tau}")))?;
        let mut lambda = 1.0;
        loop {
            let trial = &x - &step * lambda;
            if let Ok(ft) = chart_residual(chart, &trial, tau, rho) {
                let nt = ft.amax();
                if nt < norm || lambda < 1e-4 {
                    x = trial;
                    f = ft;
                    norm = nt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-4 {
                return Err(Error::OutsideTube(format!("Newton line search failed at τ = {tau}")));
            }
        }
    }
    if norm < NEWTON_TOL {
        return Ok(x);
    }
    Err(Error::OutsideTube(format!(
        "chart inversion did not converge in {NEWTON_MAX_ITER} iterations (residual {norm:e})"
    )))
}

/// Closed-form `(q*(τ), q̇*(τ))` for the tic-toc chart, used as a cross-check.
pub fn tic_toc_orbit_state(tau: f64) -> DVector<f64> {
    let p = tic_toc_reference(tau);
    DVector::from_vec(PhaseState { q: p.q, qdot: p.qdot }.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_form_inverse(tau: f64, r: &DVector<f64>) -> DVector<f64> {
        let (st, ct) = tau.sin_cos();
        let x = (1.0 + r[4]) * st;
        let dx = (1.0 + r[4]) * ct;
        let z = r[0] - 0.5 * x * x;
        let psi = r[1] + FRAC_PI_2 - (2.0 * x).atan();
        let dz = r[2] - x * dx;
        let dpsi = r[3] - 2.0 * dx / (1.0 + 4.0 * x * x);
        DVector::from_column_slice(&[x, z, psi, dx, dz, dpsi])
    }

    #[test]
    fn orbit_maps_to_zero() {
        let chart = TicTocChart::default();
        for t in [std::f64::consts::FRAC_PI_4, 0.0, 1.0, -2.0, 3.0] {
            let (tau, rho) = chart.coordinates(&tic_toc_orbit_state(t)).unwrap();
            assert!((tau - t).abs() < 1e-14);
            assert!(rho.amax() < 1e-14);
        }
    }

    #[test]
    fn simulation_start_lies_outside_tube() {
        let s = PhaseState::from_slices(&[0.1, -0.5, 0.0], &[0.0; 3]).unwrap();
        let c = to_transverse(&TicTocChart::default(), &s).unwrap();
        assert!((c.tau - FRAC_PI_2).abs() < 1e-15);
        assert!((c.rho[0] + 0.495).abs() < 1e-15);
        assert!((c.rho[1] - (-FRAC_PI_2 + 0.2f64.atan())).abs() < 1e-15);
        assert!((c.rho[4] + 0.9).abs() < 1e-15);
        assert!(!c.inside);
        assert!(orbit_error(&TicTocChart::default(), &s).is_none());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let chart = TicTocChart::default();
        let x = DVector::from_column_slice(&[0.3, -0.1, 1.2, 0.8, 0.2, -0.5]);
        let j = chart.jacobian(&x).unwrap();
        for c in 0..6 {
            let mut e = DVector::zeros(6);
            e[c] = 1e-6;
            let (tp, rp) = chart.coordinates(&(&x + &e)).unwrap();
            let (tm, rm) = chart.coordinates(&(&x - &e)).unwrap();
            assert!(((tp - tm) / 2e-6 - j[(0, c)]).abs() < 1e-8);
            for r in 0..5 {
                assert!(((rp[r] - rm[r]) / 2e-6 - j[(r + 1, c)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn newton_inverse_matches_closed_form() {
        let chart = TicTocChart::default();
        for &tau in &[0.0, 1.0, -2.0, 3.0] {
            let rho = DVector::from_column_slice(&[0.05, -0.08, 0.03, 0.1, -0.04]);
            let x = chart_invert(&chart, tau, &rho).unwrap();
            assert!((&x - closed_form_inverse(tau, &rho)).amax() < 1e-12);
            let zero = chart_invert(&chart, tau, &DVector::zeros(5)).unwrap();
            assert!((&zero - tic_toc_orbit_state(tau)).amax() < 1e-14);
        }
        let far = DVector::from_column_slice(&[1.0, 0.5, 0.0, 0.0, 0.0]);
        assert!(matches!(chart_invert(&chart, 0.0, &far), Err(Error::OutsideTube(_))));
    }
}
