//! Parametric virtual holonomic constraints `q = φ(θ)`, the coefficients of the
//! reduced dynamics `α(θ) θ̈ + β(θ) θ̇² + γ(θ) = 0`, the singular-point checker, the
//! PVTOL constraint family with a prescribed singular configuration, and the scan for
//! singular crossings along a full trajectory.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mech::{gravity_distance, MechanicalSystem, Pvtol};
use crate::trajectory::PeriodicTrajectory;

pub type CurveFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Default number of grid points for the zero scan of `α`.
pub const DEFAULT_CHECK_GRID: usize = 2048;

/// Zeros of `α` closer than this are merged.
const ZERO_MERGE_TOL: f64 = 1e-9;

/// `α′(θ_s)` must exceed this fraction of `max |α| / |I|` to count as positive, so
/// that higher-order zeros (where the slope is only rounding noise) are rejected.
const SLOPE_REL_TOL: f64 = 1e-6;

#[derive(Clone)]
pub struct ParametricVhc {
    phi: CurveFn,
    dphi: CurveFn,
    ddphi: CurveFn,
    domain: (f64, f64),
    label: String,
}

impl std::fmt::Debug for ParametricVhc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParametricVhc")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .finish()
    }
}

impl ParametricVhc {
    pub fn new(
        phi: CurveFn,
        dphi: CurveFn,
        ddphi: CurveFn,
        domain: (f64, f64),
        label: impl Into<String>,
    ) -> Result<Self> {
        if !(domain.0 < domain.1) {
            return Err(Error::Precondition(format!("empty VHC domain {domain:?}")));
        }
        Ok(Self { phi, dphi, ddphi, domain, label: label.into() })
    }

    /// The tic-toc constraint `φ(θ) = (θ, −θ²/2, π/2 − arctan 2θ)`.
    pub fn tic_toc() -> Self {
        Self {
            phi: Arc::new(|t| DVector::from_column_slice(&[t, -0.5 * t * t, FRAC_PI_2 - (2.0 * t).atan()])),
            dphi: Arc::new(|t| DVector::from_column_slice(&[1.0, -t, -2.0 / (1.0 + 4.0 * t * t)])),
            ddphi: Arc::new(|t| {
                let d = 1.0 + 4.0 * t * t;
                DVector::from_column_slice(&[0.0, -1.0, 16.0 * t / (d * d)])
            }),
            domain: (f64::NEG_INFINITY, f64::INFINITY),
            label: "tic_toc".into(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.domain.0 && theta <= self.domain.1
    }

    fn check(&self, theta: f64) -> Result<()> {
        if !theta.is_finite() {
            return Err(Error::NonFinite("VHC parameter"));
        }
        if !self.contains(theta) {
            return Err(Error::OutOfDomain { value: theta, lo: self.domain.0, hi: self.domain.1 });
        }
        Ok(())
    }

    pub fn phi(&self, theta: f64) -> Result<DVector<f64>> {
        self.check(theta)?;
        Ok((self.phi)(theta))
    }

    pub fn dphi(&self, theta: f64) -> Result<DVector<f64>> {
        self.check(theta)?;
        Ok((self.dphi)(theta))
    }

    pub fn ddphi(&self, theta: f64) -> Result<DVector<f64>> {
        self.check(theta)?;
        Ok((self.ddphi)(theta))
    }

    /// Largest discrepancy between the supplied derivatives and central differences
    /// of the curve at `theta` with step `h`.
    pub fn derivative_mismatch(&self, theta: f64, h: f64) -> Result<f64> {
        let d1 = (self.phi(theta + h)? - self.phi(theta - h)?) / (2.0 * h);
        let d2 = (self.dphi(theta + h)? - self.dphi(theta - h)?) / (2.0 * h);
        Ok((d1 - self.dphi(theta)?).amax().max((d2 - self.ddphi(theta)?).amax()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl std::ops::Mul<f64> for ReducedCoefficients {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        Self { alpha: c * self.alpha, beta: c * self.beta, gamma: c * self.gamma }
    }
}

/// `α = B⊥Mφ′`, `β = B⊥Mφ″ + B⊥C(φ, φ′)φ′`, `γ = B⊥G` with the unit-norm, oriented B⊥.
pub fn reduced_coefficients(
    sys: &dyn MechanicalSystem,
    vhc: &ParametricVhc,
    theta: f64,
) -> Result<ReducedCoefficients> {
    let q = vhc.phi(theta)?;
    let d1 = vhc.dphi(theta)?;
    let d2 = vhc.ddphi(theta)?;
    let bp = sys.left_annihilator(&q)?;
    let m = sys.mass_matrix(&q);
    let bm = &bp * m;
    let alpha = (&bm * &d1)[0];
    let beta = (&bm * &d2)[0] + (&bp * sys.coriolis(&q, &d1) * &d1)[0];
    let gamma = (&bp * sys.gravity(&q))[0];
    Ok(ReducedCoefficients { alpha, beta, gamma })
}

/// Reduced dynamics of a system under a VHC, restricted to an interval `I`.
///
/// `scale` multiplies B⊥ (and hence all three coefficients); it models the freedom
/// in normalizing the annihilator and must be nonzero.
#[derive(Clone)]
pub struct ReducedModel {
    pub sys: Arc<dyn MechanicalSystem>,
    pub vhc: ParametricVhc,
    pub interval: (f64, f64),
    pub scale: f64,
}

impl std::fmt::Debug for ReducedModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReducedModel")
            .field("vhc", &self.vhc)
            .field("interval", &self.interval)
            .field("scale", &self.scale)
            .finish()
    }
}

impl ReducedModel {
    pub fn new(sys: Arc<dyn MechanicalSystem>, vhc: ParametricVhc, interval: (f64, f64)) -> Result<Self> {
        if !(interval.0 < interval.1) || !vhc.contains(interval.0) || !vhc.contains(interval.1) {
            return Err(Error::Precondition(format!(
                "interval {interval:?} must be non-empty and inside the VHC domain {:?}",
                vhc.domain()
            )));
        }
        Ok(Self { sys, vhc, interval, scale: 1.0 })
    }

    pub fn tic_toc(interval: (f64, f64)) -> Self {
        Self::new(Arc::new(Pvtol), ParametricVhc::tic_toc(), interval).expect("valid interval")
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        assert!(scale != 0.0 && scale.is_finite());
        self.scale = scale;
        self
    }

    pub fn coefficients(&self, theta: f64) -> Result<ReducedCoefficients> {
        Ok(reduced_coefficients(self.sys.as_ref(), &self.vhc, theta)? * self.scale)
    }

    /// Coefficients multiplied by `orientation` (±1).
    pub fn oriented(&self, theta: f64, orientation: f64) -> Result<ReducedCoefficients> {
        Ok(self.coefficients(theta)? * orientation)
    }

    /// Central-difference derivatives of the coefficients, Richardson-extrapolated once.
    pub fn coefficient_slopes(&self, theta: f64) -> Result<ReducedCoefficients> {
        let h = 1e-6 * (1.0 + theta.abs());
        let diff = |h: f64| -> Result<ReducedCoefficients> {
            let p = self.coefficients(theta + h)?;
            let m = self.coefficients(theta - h)?;
            Ok(ReducedCoefficients {
                alpha: (p.alpha - m.alpha) / (2.0 * h),
                beta: (p.beta - m.beta) / (2.0 * h),
                gamma: (p.gamma - m.gamma) / (2.0 * h),
            })
        };
        let coarse = diff(h)?;
        let fine = diff(0.5 * h)?;
        Ok(ReducedCoefficients {
            alpha: (4.0 * fine.alpha - coarse.alpha) / 3.0,
            beta: (4.0 * fine.beta - coarse.beta) / 3.0,
            gamma: (4.0 * fine.gamma - coarse.gamma) / 3.0,
        })
    }

    /// `α θ̈ + β θ̇² + γ` for the model's own scale.
    pub fn residual(&self, theta: f64, theta_dot: f64, theta_ddot: f64) -> Result<f64> {
        let c = self.coefficients(theta)?;
        Ok(c.alpha * theta_ddot + c.beta * theta_dot * theta_dot + c.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingularityFlags {
    pub unique_zero: bool,
    pub slope_positive: bool,
    pub gamma_positive_on_i: bool,
    pub ratio_below_minus_half: bool,
}

impl SingularityFlags {
    pub fn all(&self) -> bool {
        self.unique_zero && self.slope_positive && self.gamma_positive_on_i && self.ratio_below_minus_half
    }
}

/// Outcome of the singular-point existence check.
///
/// Coefficient values are reported in the orientation (sign of B⊥) that makes
/// `α′(θ_s) > 0` whenever a zero was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub theta_s: Option<f64>,
    pub alpha_slope: Option<f64>,
    pub beta_s: Option<f64>,
    pub gamma_s: Option<f64>,
    pub v_s: Option<f64>,
    pub flags: SingularityFlags,
    pub overall: bool,
    pub orientation: f64,
    pub zeros: Vec<f64>,
    pub interval: [f64; 2],
}

/// Data at a verified singular point, in the canonical orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPoint {
    pub theta_s: f64,
    pub alpha_slope: f64,
    pub beta_s: f64,
    pub gamma_s: f64,
    pub v_s: f64,
    pub orientation: f64,
}

impl SingularityReport {
    pub fn singular_point(&self) -> Result<SingularPoint> {
        match (self.overall, self.theta_s, self.alpha_slope, self.beta_s, self.gamma_s, self.v_s) {
            (true, Some(theta_s), Some(alpha_slope), Some(beta_s), Some(gamma_s), Some(v_s)) => {
                Ok(SingularPoint { theta_s, alpha_slope, beta_s, gamma_s, v_s, orientation: self.orientation })
            }
            _ => Err(Error::Precondition(format!(
                "singular-point conditions do not hold (flags {:?})",
                self.flags
            ))),
        }
    }

    pub fn ratio(&self) -> Option<f64> {
        Some(self.beta_s? / self.alpha_slope?)
    }
}

fn bisect<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64, mut fa: f64) -> Result<f64> {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if (b - a) < 1e-15 * (1.0 + m.abs()) && fm.abs() < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Checks that `α` has a unique zero `θ_s` on the closed sampled interval with
/// `α′(θ_s) > 0`, `γ > 0` throughout and `β(θ_s)/α′(θ_s) < −1/2`, after choosing the
/// sign of B⊥ that makes the slope positive.
pub fn check_theorem1(model: &ReducedModel, grid: usize) -> Result<SingularityReport> {
    let grid = grid.max(3);
    let (lo, hi) = model.interval;
    let thetas: Vec<f64> = (0..grid).map(|k| lo + (hi - lo) * k as f64 / (grid - 1) as f64).collect();
    let coeffs = thetas.iter().map(|t| model.coefficients(*t)).collect::<Result<Vec<_>>>()?;

    let alpha = |t: f64| model.coefficients(t).map(|c| c.alpha);
    let mut zeros: Vec<f64> = Vec::new();
    for k in 0..grid {
        let a0 = coeffs[k].alpha;
        if a0 == 0.0 {
            zeros.push(thetas[k]);
        } else if k + 1 < grid {
            let a1 = coeffs[k + 1].alpha;
            if a1 != 0.0 && (a0 < 0.0) != (a1 < 0.0) {
                zeros.push(bisect(alpha, thetas[k], thetas[k + 1], a0)?);
            }
        }
    }
    zeros.sort_by(f64::total_cmp);
    zeros.dedup_by(|b, a| (*b - *a).abs() < ZERO_MERGE_TOL);

    let mut flags = SingularityFlags {
        unique_zero: zeros.len() == 1,
        slope_positive: false,
        gamma_positive_on_i: false,
        ratio_below_minus_half: false,
    };
    let mut report = SingularityReport {
        theta_s: None,
        alpha_slope: None,
        beta_s: None,
        gamma_s: None,
        v_s: None,
        flags,
        overall: false,
        orientation: 1.0,
        zeros: zeros.clone(),
        interval: [lo, hi],
    };

    let Some(&theta_s) = zeros.first() else {
        let mid = model.coefficients(0.5 * (lo + hi))?.gamma;
        let orientation = if mid < 0.0 { -1.0 } else { 1.0 };
        flags.gamma_positive_on_i = coeffs.iter().all(|c| orientation * c.gamma > 0.0);
        report.flags = flags;
        report.orientation = orientation;
        return Ok(report);
    };

    let raw_slope = model.coefficient_slopes(theta_s)?.alpha;
    let orientation = if raw_slope < 0.0 { -1.0 } else { 1.0 };
    let at = model.oriented(theta_s, orientation)?;
    let slope = orientation * raw_slope;
    let alpha_scale = coeffs.iter().map(|c| c.alpha.abs()).fold(0.0, f64::max) / (hi - lo);
    flags.slope_positive = slope > SLOPE_REL_TOL * alpha_scale;
    flags.gamma_positive_on_i = coeffs.iter().all(|c| orientation * c.gamma > 0.0);
    flags.ratio_below_minus_half = flags.slope_positive && at.beta / slope < -0.5;

    report.theta_s = Some(theta_s);
    report.alpha_slope = Some(slope);
    report.beta_s = Some(at.beta);
    report.gamma_s = Some(at.gamma);
    report.v_s = (at.beta < 0.0 && at.gamma > 0.0).then(|| (-at.gamma / at.beta).sqrt());
    report.orientation = orientation;
    report.flags = flags;
    report.overall = flags.all();
    Ok(report)
}

/// Parameters of the constraint family with a singular point at `q_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParameters {
    pub psi_s: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub theta_max: f64,
}

/// `φ(θ) = q_s + B(q_s)(k₁, k₂)ᵀ θ + ½ k₃ B⊥ᵀ(q_s) θ²`.
pub fn family_vhc(
    sys: &dyn MechanicalSystem,
    q_s: &DVector<f64>,
    k1: f64,
    k2: f64,
    k3: f64,
) -> Result<ParametricVhc> {
    if [k1, k2, k3].iter().any(|v| !v.is_finite()) || q_s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("family parameters"));
    }
    if sys.dof() != 3 || q_s.len() != 3 {
        return Err(Error::Precondition("the constraint family needs a 3-DOF model".into()));
    }
    let b = sys.input_map(q_s) * DVector::from_column_slice(&[k1, k2]);
    if b.norm() == 0.0 {
        return Err(Error::Precondition("degenerate parameters: φ′(0) = 0".into()));
    }
    let nrm = sys.left_annihilator(q_s)?.transpose();
    let (qs, b1, n1) = (q_s.clone(), b.clone(), nrm.clone());
    let (b2, n2) = (b, nrm.clone());
    ParametricVhc::new(
        Arc::new(move |t| &qs + &b1 * t + &n1 * (0.5 * k3 * t * t)),
        Arc::new(move |t| &b2 + &n2 * (k3 * t)),
        Arc::new(move |_| &nrm * k3),
        (f64::NEG_INFINITY, f64::INFINITY),
        format!("family(k1={k1},k2={k2},k3={k3})"),
    )
}

/// Reduced model of the PVTOL family at `q_s = (x_s, z_s, ψ_s)` on `(−θ_max, θ_max)`.
pub fn family_model(q_s: &DVector<f64>, p: &FamilyParameters) -> Result<ReducedModel> {
    let vhc = family_vhc(&Pvtol, q_s, p.k1, p.k2, p.k3)?;
    ReducedModel::new(Arc::new(Pvtol), vhc, (-p.theta_max, p.theta_max))
}

pub const FAMILY_K1: [f64; 8] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];
pub const FAMILY_K2: [f64; 8] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];
pub const FAMILY_K3: [f64; 8] = [-2.0, -1.75, -1.5, -1.25, -1.0, -0.75, -0.5, -0.25];
pub const FAMILY_THETA_MAX: [f64; 3] = [0.5, 0.35, 0.2];

/// Deterministic grid search for family parameters passing the singular-point check.
///
/// For `ψ_s ∈ (π, 2π)` gravity points the other way along B⊥, and the search runs over
/// the mirrored box `(−k₁, k₂, −k₃)`. Returns `Ok(None)` when nothing in the box passes.
pub fn find_family_parameters(psi_s: f64) -> Result<Option<FamilyParameters>> {
    if !psi_s.is_finite() {
        return Err(Error::NonFinite("psi_s"));
    }
    if !(psi_s > 0.0 && psi_s < 2.0 * PI) || psi_s == PI {
        return Err(Error::Precondition(format!("psi_s = {psi_s} must lie in (0, π) ∪ (π, 2π)")));
    }
    let mirror = if psi_s.sin() < 0.0 { -1.0 } else { 1.0 };
    let q_s = DVector::from_column_slice(&[0.0, 0.0, psi_s]);
    for &k1 in &FAMILY_K1 {
        for &k2 in &FAMILY_K2 {
            for &k3 in &FAMILY_K3 {
                for &theta_max in &FAMILY_THETA_MAX {
                    let p = FamilyParameters { psi_s, k1: mirror * k1, k2, k3: mirror * k3, theta_max };
                    let model = family_model(&q_s, &p)?;
                    if check_theorem1(&model, DEFAULT_CHECK_GRID)?.overall {
                        return Ok(Some(p));
                    }
                }
            }
        }
    }
    Ok(None)
}

/// A time at which `B⊥ M q̇` changes sign along a trajectory with `q̇ ≠ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularTime {
    pub t: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    /// `B⊥ M q̇` at the refined time.
    pub annihilator_value: f64,
    pub velocity_norm: f64,
    pub gravity_distance: f64,
    pub gravity_outside_image: bool,
}

const VELOCITY_TOL: f64 = 1e-8;
const GRAVITY_TOL: f64 = 1e-8;

/// Locates every sign change of `B⊥(q) M(q) q̇` over one period, refines it by
/// bisection on the continuous trajectory, and keeps the crossings with `q̇ ≠ 0`.
pub fn theorem2_scan(sys: &dyn MechanicalSystem, traj: &PeriodicTrajectory) -> Result<Vec<SingularTime>> {
    let projected = |q: &DVector<f64>, qdot: &DVector<f64>| -> Result<f64> {
        Ok((sys.left_annihilator(q)? * sys.mass_matrix(q) * qdot)[0])
    };
    let at = |t: f64| -> Result<f64> {
        let p = traj.point(t)?;
        projected(&p.q, &p.qdot)
    };
    let period = traj.period;
    let n = traj.samples.len();
    if n < 2 {
        return Err(Error::Precondition("trajectory needs at least two samples".into()));
    }
    let values = traj
        .samples
        .iter()
        .map(|s| projected(&s.q, &s.qdot))
        .collect::<Result<Vec<_>>>()?;

    let mut candidates = Vec::new();
    for k in 0..n {
        let (t0, v0) = (traj.samples[k].t, values[k]);
        let (t1, v1) = if k + 1 < n { (traj.samples[k + 1].t, values[k + 1]) } else { (period, values[0]) };
        if v0 == 0.0 {
            candidates.push(t0);
        } else if v1 != 0.0 && (v0 < 0.0) != (v1 < 0.0) {
            candidates.push(bisect_time(&at, t0, t1, v0)?);
        }
    }

    let mut out: Vec<SingularTime> = Vec::new();
    for t in candidates {
        let mut t = t.rem_euclid(period);
        if period - t < 1e-9 {
            t = 0.0;
        }
        if out.iter().any(|s| (s.t - t).abs() < 1e-9) {
            continue;
        }
        let p = traj.point(t)?;
        let velocity_norm = p.qdot.norm();
        if velocity_norm <= VELOCITY_TOL {
            continue;
        }
        let gd = gravity_distance(sys, &p.q)?;
        out.push(SingularTime {
            t,
            annihilator_value: projected(&p.q, &p.qdot)?,
            velocity_norm,
            gravity_distance: gd,
            gravity_outside_image: gd > GRAVITY_TOL,
            q: p.q,
            qdot: p.qdot,
        });
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(out)
}

fn bisect_time(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, mut fa: f64) -> Result<f64> {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{TrajectoryPoint, TrajectorySource};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn tic_toc_coefficients_at_zero() {
        let c = reduced_coefficients(&Pvtol, &ParametricVhc::tic_toc(), 0.0).unwrap();
        assert_abs_diff_eq!(c.alpha, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.beta, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.gamma, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn tic_toc_ratios_are_normalization_free() {
        let model = ReducedModel::tic_toc((-2.0, 2.0));
        for k in 0..=60 {
            let th = -1.5 + 0.05 * k as f64;
            let c = model.coefficients(th).unwrap();
            assert!((c.alpha / c.gamma - th).abs() < 1e-12);
            assert!((c.beta / c.gamma + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flipped_annihilator_flips_all_coefficients() {
        let model = ReducedModel::tic_toc((-2.0, 2.0));
        let flipped = model.clone().with_scale(-1.0);
        let (a, b) = (model.coefficients(0.0).unwrap(), flipped.coefficients(0.0).unwrap());
        assert_eq!((a.alpha, a.beta, a.gamma), (-b.alpha, -b.beta, -b.gamma));
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let vhc = ParametricVhc::new(
            Arc::new(|t| v(&[t, 0.0, 0.0])),
            Arc::new(|_| v(&[1.0, 0.0, 0.0])),
            Arc::new(|_| v(&[0.0, 0.0, 0.0])),
            (-1.0, 1.0),
            "line",
        )
        .unwrap();
        assert!(matches!(reduced_coefficients(&Pvtol, &vhc, 1.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn tic_toc_passes_singularity_check() {
        let r = check_theorem1(&ReducedModel::tic_toc((-2.0, 2.0)), DEFAULT_CHECK_GRID).unwrap();
        assert!(r.overall, "{r:?}");
        assert!(r.theta_s.unwrap().abs() < 1e-12);
        assert!((r.alpha_slope.unwrap() - 1.0).abs() < 1e-8);
        assert!((r.ratio().unwrap() + 1.0).abs() < 1e-8);
        assert!((r.v_s.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn family_example_passes_and_sign_flip_fails() {
        let q_s = v(&[0.0, 0.0, FRAC_PI_2]);
        let ok = family_model(&q_s, &FamilyParameters { psi_s: FRAC_PI_2, k1: 1.0, k2: 2.0, k3: -1.0, theta_max: 0.5 })
            .unwrap();
        let r = check_theorem1(&ok, DEFAULT_CHECK_GRID).unwrap();
        assert!(r.overall);
        assert!(r.theta_s.unwrap().abs() < 1e-12);
        assert!((r.alpha_slope.unwrap() - 1.0).abs() < 1e-8);
        assert!((r.ratio().unwrap() + 1.0).abs() < 1e-8);

        let bad = family_model(&q_s, &FamilyParameters { psi_s: FRAC_PI_2, k1: 1.0, k2: 2.0, k3: 1.0, theta_max: 0.5 })
            .unwrap();
        let r = check_theorem1(&bad, DEFAULT_CHECK_GRID).unwrap();
        assert!(!r.overall);
        assert!(r.flags.unique_zero && r.flags.slope_positive && r.flags.gamma_positive_on_i);
        assert!(!r.flags.ratio_below_minus_half);
        assert!((r.ratio().unwrap() - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn family_curve_example() {
        let q_s = v(&[0.0, 0.0, FRAC_PI_2]);
        let vhc = family_vhc(&Pvtol, &q_s, 1.0, 2.0, -1.0).unwrap();
        for th in [-0.4, 0.0, 0.3, 1.1] {
            assert_abs_diff_eq!(vhc.phi(th).unwrap(), v(&[-th, -th * th / 2.0, FRAC_PI_2 + 2.0 * th]), epsilon = 1e-15);
            assert!(vhc.derivative_mismatch(th, 1e-4).unwrap() < 1e-7);
        }
        let q_s = v(&[0.7, -1.3, 2.2]);
        assert_eq!(family_vhc(&Pvtol, &q_s, 0.3, 1.2, -0.8).unwrap().phi(0.0).unwrap(), q_s);
        assert!(family_vhc(&Pvtol, &q_s, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn family_coefficients_match_closed_form_ratios() {
        for &(psi_s, k1, k2, k3) in &[(FRAC_PI_2, 1.0, 2.0, -1.0), (FRAC_PI_4, 0.5, 1.5, -0.75), (4.0, -1.0, 2.5, 1.2)] {
            let q_s = v(&[0.3, -0.2, psi_s]);
            let vhc = family_vhc(&Pvtol, &q_s, k1, k2, k3).unwrap();
            for j in 0..=20 {
                let th = -0.5 + 0.05 * j as f64;
                let c = reduced_coefficients(&Pvtol, &vhc, th).unwrap();
                let alpha = k1 * (k2 * th).sin() + k3 * th * (k2 * th).cos();
                let beta = k3 * (k2 * th).cos();
                let gamma = (psi_s + k2 * th).sin();
                // PVTOL has a unit-norm annihilator, so the common factor is one.
                assert!((c.alpha - alpha).abs() < 1e-12);
                assert!((c.beta - beta).abs() < 1e-12);
                assert!((c.gamma - gamma).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn family_search() {
        for psi in [FRAC_PI_2, FRAC_PI_4, 3.0 * FRAC_PI_4, 4.5] {
            let p = find_family_parameters(psi).unwrap().expect("box contains a witness");
            let r = check_theorem1(&family_model(&v(&[0.0, 0.0, psi]), &p).unwrap(), DEFAULT_CHECK_GRID).unwrap();
            assert!(r.overall);
        }
        assert!(find_family_parameters(PI).is_err());
        assert!(find_family_parameters(-0.2).is_err());
    }

    #[test]
    fn hand_picked_witnesses_pass() {
        let q2 = v(&[0.0, 0.0, FRAC_PI_2]);
        let q4 = v(&[0.0, 0.0, FRAC_PI_4]);
        let a = FamilyParameters { psi_s: FRAC_PI_2, k1: 1.0, k2: 2.0, k3: -1.0, theta_max: 0.5 };
        let b = FamilyParameters { psi_s: FRAC_PI_4, k1: 1.0, k2: 2.0, k3: -1.0, theta_max: 0.35 };
        assert!(check_theorem1(&family_model(&q2, &a).unwrap(), DEFAULT_CHECK_GRID).unwrap().overall);
        assert!(check_theorem1(&family_model(&q4, &b).unwrap(), DEFAULT_CHECK_GRID).unwrap().overall);
    }

    #[test]
    fn degenerate_slope_is_rejected() {
        // α′(0) = k₁k₂ + k₃ = 0: α has a triple zero at the origin.
        let q_s = v(&[0.0, 0.0, FRAC_PI_4]);
        let p = FamilyParameters { psi_s: FRAC_PI_4, k1: 0.25, k2: 1.0, k3: -0.25, theta_max: 0.5 };
        let r = check_theorem1(&family_model(&q_s, &p).unwrap(), DEFAULT_CHECK_GRID).unwrap();
        assert!(r.flags.unique_zero && !r.flags.slope_positive && !r.overall);
    }

    #[test]
    fn multiple_zeros_are_listed() {
        // With k2 = 4, α oscillates several times on (−2, 2).
        let q_s = v(&[0.0, 0.0, FRAC_PI_2]);
        let p = FamilyParameters { psi_s: FRAC_PI_2, k1: 1.0, k2: 4.0, k3: -1.0, theta_max: 2.0 };
        let r = check_theorem1(&family_model(&q_s, &p).unwrap(), DEFAULT_CHECK_GRID).unwrap();
        assert!(!r.flags.unique_zero);
        assert!(r.zeros.len() > 1);
        assert!(!r.overall);
    }

    #[test]
    fn no_zero_fails_unique_flag() {
        let tilted = ParametricVhc::new(
            Arc::new(|t| v(&[t, 0.0, 0.3])),
            Arc::new(|_| v(&[1.0, 0.0, 0.0])),
            Arc::new(|_| v(&[0.0, 0.0, 0.0])),
            (-5.0, 5.0),
            "tilted",
        )
        .unwrap();
        let m = ReducedModel::new(Arc::new(Pvtol), tilted, (-1.0, 1.0)).unwrap();
        let r = check_theorem1(&m, 256).unwrap();
        assert!(!r.flags.unique_zero && !r.overall && r.zeros.is_empty());
        assert!(r.singular_point().is_err());
    }

    #[test]
    fn scan_finds_tic_toc_crossings() {
        let tr = PeriodicTrajectory::tic_toc(1000);
        let s = theorem2_scan(&Pvtol, &tr).unwrap();
        let times: Vec<f64> = s.iter().map(|x| x.t).collect();
        assert_eq!(times.len(), 2, "{times:?}");
        assert!(times[0].abs() < 1e-8);
        assert!((times[1] - PI).abs() < 1e-8);
        for r in &s {
            assert!((r.gravity_distance - 1.0).abs() < 1e-12);
            assert!(r.gravity_outside_image);
            assert!((r.velocity_norm - 5f64.sqrt()).abs() < 1e-12);
        }
    }

    struct Cruise;
    impl TrajectorySource for Cruise {
        fn period(&self) -> f64 {
            2.0 * PI
        }
        fn point(&self, t: f64) -> Result<TrajectoryPoint> {
            Ok(TrajectoryPoint {
                t,
                theta: 2.0 * t,
                theta_dot: 2.0,
                q: v(&[2.0 * t, 0.0, 0.0]),
                qdot: v(&[2.0, 0.0, 0.0]),
                qddot: v(&[0.0, 0.0, 0.0]),
                u: v(&[1.0, 0.0]),
            })
        }
    }

    #[test]
    fn level_cruise_has_no_crossings() {
        let tr = PeriodicTrajectory::sample(Arc::new(Cruise), 600).unwrap();
        assert!(theorem2_scan(&Pvtol, &tr).unwrap().is_empty());
    }
}
