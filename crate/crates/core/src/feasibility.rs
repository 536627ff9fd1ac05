//! Numeric certificates that no regular VHC can hold a given periodic motion, the
//! explicit candidate constraint for the tic-toc orbit, and the accessibility-rank
//! determinant built from Lie brackets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mech::{MechanicalSystem, PhaseState};
use crate::trajectory::PeriodicTrajectory;
use crate::vhc::{theorem2_scan, SingularTime};

const RESIDUAL_TOL: f64 = 1e-10;
const VELOCITY_TOL: f64 = 1e-8;
const GRAVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub t_s: f64,
    pub q_s: Vec<f64>,
    pub qdot_s: Vec<f64>,
    pub annihilator_residual: f64,
    pub velocity_norm: f64,
    pub gravity_distance: f64,
    /// All three hypotheses hold at this time.
    pub qualifies: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Some crossing satisfies every hypothesis: no regular VHC contains the motion.
    NoRegularVhc,
    /// The sufficient conditions do not apply; nothing is concluded.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoVhcCertificate {
    pub singular_times: Vec<CertificateRecord>,
    pub verdict: Verdict,
    pub reason: String,
}

impl NoVhcCertificate {
    pub fn is_positive(&self) -> bool {
        self.verdict == Verdict::NoRegularVhc
    }
}

fn record(s: &SingularTime) -> CertificateRecord {
    let annihilator_residual = s.annihilator_value.abs();
    CertificateRecord {
        t_s: s.t,
        q_s: s.q.iter().copied().collect(),
        qdot_s: s.qdot.iter().copied().collect(),
        annihilator_residual,
        velocity_norm: s.velocity_norm,
        gravity_distance: s.gravity_distance,
        qualifies: annihilator_residual < RESIDUAL_TOL
            && s.velocity_norm > VELOCITY_TOL
            && s.gravity_distance > GRAVITY_TOL,
    }
}

/// Scans the trajectory for configurations where `B⊥ M q̇` vanishes with `q̇ ≠ 0`
/// and gravity is not matched by the inputs. One such configuration rules out every
/// regular constraint manifold containing the motion.
pub fn certify_no_regular_vhc(sys: &dyn MechanicalSystem, traj: &PeriodicTrajectory) -> Result<NoVhcCertificate> {
    let records: Vec<CertificateRecord> = theorem2_scan(sys, traj)?.iter().map(record).collect();
    let (verdict, reason) = if records.is_empty() {
        (Verdict::Inconclusive, "no singular time along the trajectory; the nonexistence test is inapplicable".to_string())
    } else if let Some(r) = records.iter().find(|r| r.qualifies) {
        (
            Verdict::NoRegularVhc,
            format!("at t = {:.12} the annihilated momentum vanishes with nonzero velocity and unmatched gravity", r.t_s),
        )
    } else {
        (
            Verdict::Inconclusive,
            "singular times found, but gravity lies in the input image or the residual is too large at each".to_string(),
        )
    };
    Ok(NoVhcCertificate { singular_times: records, verdict, reason })
}

/// The constraint `h(q) = (z + x²/2, ψ − π/2 + arctan 2x)` and its Jacobian.
pub fn candidate_h(q: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if q.len() != 3 {
        return Err(Error::Precondition(format!("candidate constraint needs q ∈ ℝ³, got {}", q.len())));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("configuration"));
    }
    let (x, z, psi) = (q[0], q[1], q[2]);
    let h = DVector::from_column_slice(&[z + 0.5 * x * x, psi - std::f64::consts::FRAC_PI_2 + (2.0 * x).atan()]);
    let dh = DMatrix::from_row_slice(2, 3, &[x, 1.0, 0.0, 2.0 / (1.0 + 4.0 * x * x), 0.0, 1.0]);
    Ok((h, dh))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessibilityMethod {
    ClosedForm,
    NumericBracket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessibilityRecord {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub det: f64,
    pub method: AccessibilityMethod,
}

/// Step of the nested central differences for the Lie brackets.
pub const BRACKET_STEP: f64 = 1e-5;

/// `det Ψ` with `Ψ = [f, g₁, …, g_{n−1}, ad_f g₁, …, ad_f g_{n−1}, ad_f² g₁]`.
pub fn accessibility_det(sys: &dyn MechanicalSystem, state: &PhaseState, method: AccessibilityMethod) -> Result<f64> {
    if state.q.iter().chain(state.qdot.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state"));
    }
    let det = match method {
        AccessibilityMethod::ClosedForm => {
            if sys.name() != "pvtol" {
                return Err(Error::Precondition("the closed-form determinant is only available for the PVTOL model".into()));
            }
            let (dx, dz, dpsi) = (state.qdot[0], state.qdot[1], state.qdot[2]);
            let (s, c) = state.q[2].sin_cos();
            2.0 * dpsi * (-dpsi * dx * s + dpsi * dz * c + s)
        }
        AccessibilityMethod::NumericBracket => accessibility_matrix(sys, state)?.determinant(),
    };
    if !det.is_finite() {
        return Err(Error::NonFinite("accessibility determinant"));
    }
    Ok(det)
}

pub fn accessibility_record(
    sys: &dyn MechanicalSystem,
    state: &PhaseState,
    method: AccessibilityMethod,
) -> Result<AccessibilityRecord> {
    Ok(AccessibilityRecord {
        q: state.q.iter().copied().collect(),
        qdot: state.qdot.iter().copied().collect(),
        det: accessibility_det(sys, state, method)?,
        method,
    })
}

/// Drift `f(x) = (q̇, M⁻¹(−C q̇ − G))` on the stacked state.
fn drift(sys: &dyn MechanicalSystem, x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = sys.dof();
    let q = x.rows(0, n).into_owned();
    let qdot = x.rows(n, n).into_owned();
    let rhs = -(sys.coriolis(&q, &qdot) * &qdot) - sys.gravity(&q);
    let acc = sys
        .mass_matrix(&q)
        .cholesky()
        .ok_or_else(|| Error::ModelInvariant("mass matrix is not positive definite".into()))?
        .solve(&rhs);
    let mut out = DVector::zeros(2 * n);
    out.rows_mut(0, n).copy_from(&qdot);
    out.rows_mut(n, n).copy_from(&acc);
    Ok(out)
}

/// Input field `g_i(x) = (0, M⁻¹ B_i)`.
fn input_field(sys: &dyn MechanicalSystem, x: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
    let n = sys.dof();
    let q = x.rows(0, n).into_owned();
    let col = sys.input_map(&q).column(i).into_owned();
    let acc = sys
        .mass_matrix(&q)
        .cholesky()
        .ok_or_else(|| Error::ModelInvariant("mass matrix is not positive definite".into()))?
        .solve(&col);
    let mut out = DVector::zeros(2 * n);
    out.rows_mut(n, n).copy_from(&acc);
    Ok(out)
}

type Field<'a> = dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + 'a;

/// Directional derivative `DF(x) v` by central differences.
fn jvp(field: &Field<'_>, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let h = BRACKET_STEP;
    Ok((field(&(x + v * h))? - field(&(x - v * h))?) / (2.0 * h))
}

/// `[f, g](x) = Dg(x) f(x) − Df(x) g(x)`.
fn bracket(f: &Field<'_>, g: &Field<'_>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let fx = f(x)?;
    let gx = g(x)?;
    Ok(jvp(g, x, &fx)? - jvp(f, x, &gx)?)
}

pub fn accessibility_matrix(sys: &dyn MechanicalSystem, state: &PhaseState) -> Result<DMatrix<f64>> {
    let n = sys.dof();
    if state.q.len() != n || state.qdot.len() != n {
        return Err(Error::Precondition("state dimension does not match the model".into()));
    }
    let x = DVector::from_vec(state.to_vec());
    let f = |y: &DVector<f64>| drift(sys, y);
    let mut cols: Vec<DVector<f64>> = vec![f(&x)?];
    for i in 0..n - 1 {
        cols.push(input_field(sys, &x, i)?);
    }
    for i in 0..n - 1 {
        let g = move |y: &DVector<f64>| input_field(sys, y, i);
        cols.push(bracket(&f, &g, &x)?);
    }
    let g1 = |y: &DVector<f64>| input_field(sys, y, 0);
    let ad1 = |y: &DVector<f64>| bracket(&f, &g1, y);
    cols.push(bracket(&f, &ad1, &x)?);
    let m = DMatrix::from_columns(&cols);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Lie bracket"));
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessibilitySample {
    pub t: f64,
    pub det: f64,
}

/// `det Ψ` at each trajectory sample.
pub fn accessibility_along(
    sys: &dyn MechanicalSystem,
    traj: &PeriodicTrajectory,
    method: AccessibilityMethod,
) -> Result<Vec<AccessibilitySample>> {
    traj.samples
        .iter()
        .map(|p| Ok(AccessibilitySample { t: p.t, det: accessibility_det(sys, &p.phase_state(), method)? }))
        .collect()
}

/// Times in `[0, T)` where `det Ψ` changes sign along the continuous trajectory.
pub fn accessibility_zeros(
    sys: &dyn MechanicalSystem,
    traj: &PeriodicTrajectory,
    method: AccessibilityMethod,
) -> Result<Vec<f64>> {
    let at = |t: f64| -> Result<f64> { accessibility_det(sys, &traj.point(t)?.phase_state(), method) };
    let table = accessibility_along(sys, traj, method)?;
    let period = traj.period;
    let mut zeros = Vec::new();
    for k in 0..table.len() {
        let a = table[k];
        let (tb, db) = if k + 1 < table.len() { (table[k + 1].t, table[k + 1].det) } else { (period, table[0].det) };
        if a.det == 0.0 {
            zeros.push(a.t);
            continue;
        }
        if db == 0.0 || (a.det < 0.0) == (db < 0.0) {
            continue;
        }
        let (mut lo, mut hi, mut flo) = (a.t, tb, a.det);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = at(mid)?;
            if (fm < 0.0) == (flo < 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        zeros.push((0.5 * (lo + hi)).rem_euclid(period));
    }
    Ok(zeros)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mech::{tic_toc_reference, Pvtol};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn candidate_vanishes_on_orbit() {
        for t in [0.0, 1.0, 2.0] {
            let (h, dh) = candidate_h(&tic_toc_reference(t).q).unwrap();
            assert!(h.amax() < 1e-12);
            assert_eq!(dh.rank(1e-12), 2);
        }
        let (_, dh) = candidate_h(&v(&[0.0, 0.0, FRAC_PI_2])).unwrap();
        assert!((dh * v(&[1.0, 0.0, -2.0])).amax() < 1e-15);
        assert!(candidate_h(&v(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn closed_form_example_and_hover() {
        let s = PhaseState::from_slices(&[0.0, 0.0, FRAC_PI_2], &[1.0, 0.0, -2.0]).unwrap();
        let d = accessibility_det(&Pvtol, &s, AccessibilityMethod::ClosedForm).unwrap();
        assert!((d + 12.0).abs() < 1e-12);
        let s = PhaseState::from_slices(&[0.3, 0.1, 0.4], &[0.7, -0.2, 0.0]).unwrap();
        assert_eq!(accessibility_det(&Pvtol, &s, AccessibilityMethod::ClosedForm).unwrap(), 0.0);
    }

    #[test]
    fn numeric_brackets_agree_with_closed_form() {
        let states = [
            ([0.0, 0.0, FRAC_PI_2], [1.0, 0.0, -2.0]),
            ([0.2, -0.3, 1.1], [0.4, 0.5, 0.9]),
            ([-1.0, 0.7, 2.5], [-0.3, 1.2, -1.4]),
        ];
        for (q, qd) in states {
            let s = PhaseState::from_slices(&q, &qd).unwrap();
            let a = accessibility_det(&Pvtol, &s, AccessibilityMethod::ClosedForm).unwrap();
            let b = accessibility_det(&Pvtol, &s, AccessibilityMethod::NumericBracket).unwrap();
            assert!((a - b).abs() < 1e-4 * a.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn tic_toc_certificate_is_positive() {
        let c = certify_no_regular_vhc(&Pvtol, &PeriodicTrajectory::tic_toc(1000)).unwrap();
        assert!(c.is_positive());
        assert_eq!(c.singular_times.len(), 2);
        let r = &c.singular_times[1];
        assert!((r.t_s - PI).abs() < 1e-8);
        assert!((r.qdot_s[0] + 1.0).abs() < 1e-8 && (r.qdot_s[2] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn accessibility_vanishes_only_at_turning_points() {
        let tr = PeriodicTrajectory::tic_toc(720);
        let zeros = accessibility_zeros(&Pvtol, &tr, AccessibilityMethod::ClosedForm).unwrap();
        assert_eq!(zeros.len(), 2, "{zeros:?}");
        assert!((zeros[0] - FRAC_PI_2).abs() < 1e-6);
        assert!((zeros[1] - 3.0 * FRAC_PI_2).abs() < 1e-6);
    }
}
