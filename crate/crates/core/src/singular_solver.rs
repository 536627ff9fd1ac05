//! Solutions of the singular reduced dynamics `α θ̈ + β θ̇² + γ = 0` that cross the
//! singular point, their periodic extension by time reversal, and the lift to a
//! full-state trajectory with feedforward inputs.
//!
//! Each branch is integrated *toward* the singular point from its regular endpoint.
//! Every solution approaching `θ_s` arrives with the forced speed `v_s`, so the
//! approach is well conditioned, whereas leaving the singular point is not: the
//! outgoing solutions form a one-parameter family that all share the same Taylor
//! jet at `θ_s`. The last `δ` before `θ_s` is bridged with a Hermite patch of
//! `y(θ) = θ̇²`, which is smooth through the singularity.

use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mech::{inverse_input, MechanicalSystem};
use crate::ode::{dopri5, AdaptiveOptions, Control};
use crate::trajectory::{PeriodicTrajectory, TrajectoryPoint, TrajectorySource};
use crate::vhc::{ParametricVhc, ReducedModel, SingularPoint, SingularityReport};

/// Half-width of the interval around `θ_s` bridged by the Hermite patch.
pub const DEFAULT_PATCH_WIDTH: f64 = 1e-4;
/// Taylor escape step used when none is given.
pub const DEFAULT_ESCAPE_STEP: f64 = 1e-4;
/// Sample spacing cap for the integrated branches.
const MAX_SAMPLE_STEP: f64 = 5e-3;
/// Sub-intervals per patch half.
const PATCH_PIECES: usize = 8;
/// Integration time budget per branch.
const MAX_BRANCH_TIME: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSample {
    pub t: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub theta_ddot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub t: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSolution {
    pub samples: Vec<ScalarSample>,
    pub t_s: f64,
    pub theta_s: f64,
    pub start: Endpoint,
    pub end: Endpoint,
    /// Mismatch of `θ̇²` between each integrated branch and the linear Taylor model
    /// at the patch boundary; small values confirm the branch reached the forced
    /// crossing speed.
    pub patch_mismatch: f64,
}

/// `θ(t)` on a sample interval through quintic Hermite interpolation of
/// `(θ, θ̇, θ̈)` at both nodes.
fn hermite5(a: &ScalarSample, b: &ScalarSample, t: f64) -> (f64, f64, f64) {
    let h = b.t - a.t;
    let s = (t - a.t) / h;
    let (p0, v0, a0) = (a.theta, a.theta_dot * h, a.theta_ddot * h * h);
    let (p1, v1, a1) = (b.theta, b.theta_dot * h, b.theta_ddot * h * h);
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h00 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let h10 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let h20 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
    let h01 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    let h11 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let h21 = 0.5 * s3 - s4 + 0.5 * s5;
    let d00 = -30.0 * s2 + 60.0 * s3 - 30.0 * s4;
    let d10 = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4;
    let d20 = s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4;
    let d11 = -12.0 * s2 + 28.0 * s3 - 15.0 * s4;
    let d21 = 1.5 * s2 - 4.0 * s3 + 2.5 * s4;
    let e00 = -60.0 * s + 180.0 * s2 - 120.0 * s3;
    let e10 = -36.0 * s + 96.0 * s2 - 60.0 * s3;
    let e20 = 1.0 - 9.0 * s + 18.0 * s2 - 10.0 * s3;
    let e11 = -24.0 * s + 84.0 * s2 - 60.0 * s3;
    let e21 = 3.0 * s - 12.0 * s2 + 10.0 * s3;
    let p = h00 * p0 + h10 * v0 + h20 * a0 + h01 * p1 + h11 * v1 + h21 * a1;
    let v = d00 * p0 + d10 * v0 + d20 * a0 - d00 * p1 + d11 * v1 + d21 * a1;
    let acc = e00 * p0 + e10 * v0 + e20 * a0 - e00 * p1 + e11 * v1 + e21 * a1;
    (p, v / h, acc / (h * h))
}

impl ScalarSolution {
    pub fn duration(&self) -> f64 {
        self.end.t - self.start.t
    }

    /// `(θ, θ̇, θ̈)` at `t ∈ [t₁, t₂]`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64, f64)> {
        if !t.is_finite() {
            return Err(Error::NonFinite("evaluation time"));
        }
        let (lo, hi) = (self.start.t, self.end.t);
        let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if t < lo - tol || t > hi + tol {
            return Err(Error::OutOfDomain { value: t, lo, hi });
        }
        let t = t.clamp(lo, hi);
        let k = self.samples.partition_point(|s| s.t <= t).clamp(1, self.samples.len() - 1);
        Ok(hermite5(&self.samples[k - 1], &self.samples[k], t))
    }

    /// Largest `|α θ̈ + β θ̇² + γ|` over the samples.
    pub fn max_residual(&self, model: &ReducedModel) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for s in &self.samples {
            worst = worst.max(model.residual(s.theta, s.theta_dot, s.theta_ddot)?.abs());
        }
        Ok(worst)
    }

    /// The time-reversed solution `θ(−t)`.
    pub fn reversed(&self) -> ScalarSolution {
        let samples = self
            .samples
            .iter()
            .rev()
            .map(|s| ScalarSample { t: -s.t, theta: s.theta, theta_dot: -s.theta_dot, theta_ddot: s.theta_ddot })
            .collect();
        let flip = |e: &Endpoint| Endpoint { t: -e.t, theta: e.theta, theta_dot: -e.theta_dot };
        ScalarSolution {
            samples,
            t_s: -self.t_s,
            theta_s: self.theta_s,
            start: flip(&self.end),
            end: flip(&self.start),
            patch_mismatch: self.patch_mismatch,
        }
    }
}

/// `a_s = −(β′ v_s² + γ′)/(α′ + 2β)` at the singular point, in the canonical orientation.
pub fn singular_acceleration(model: &ReducedModel, sp: &SingularPoint) -> Result<f64> {
    let slopes = model.coefficient_slopes(sp.theta_s)? * sp.orientation;
    let denom = sp.alpha_slope + 2.0 * sp.beta_s;
    if denom >= 0.0 {
        return Err(Error::Precondition(format!("α′ + 2β = {denom} is not negative")));
    }
    Ok(-(slopes.beta * sp.v_s * sp.v_s + slopes.gamma) / denom)
}

/// Second-order Taylor step from the singular point: the state at `t_s ± h`.
pub fn escape_singularity(
    model: &ReducedModel,
    report: &SingularityReport,
    direction: f64,
    h: f64,
) -> Result<(f64, f64)> {
    let sp = report.singular_point()?;
    if !(h > 0.0 && h <= 1e-3) {
        return Err(Error::Precondition(format!("escape step {h} must lie in (0, 1e-3]")));
    }
    if direction != 1.0 && direction != -1.0 {
        return Err(Error::Precondition("direction must be +1 or -1".into()));
    }
    let a_s = singular_acceleration(model, &sp)?;
    let dt = direction * h;
    Ok((sp.theta_s + sp.v_s * dt + 0.5 * a_s * dt * dt, sp.v_s + a_s * dt))
}

struct Branch {
    /// Samples in integration time, starting at the regular endpoint.
    samples: Vec<ScalarSample>,
    /// Time to reach the patch boundary.
    duration: f64,
}

/// Integrates from `(theta0, theta_dot0)` until `|θ − θ_s| = δ`, with the velocity
/// required to point toward the singular point.
fn approach(model: &ReducedModel, theta_s: f64, delta: f64, theta0: f64, theta_dot0: f64) -> Result<Branch> {
    let side = (theta0 - theta_s).signum();
    let toward = -side;
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let accel = |theta: f64, theta_dot: f64| -> f64 {
        match model.coefficients(theta) {
            Ok(c) => -(c.beta * theta_dot * theta_dot + c.gamma) / c.alpha,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let a0 = accel(theta0, theta_dot0);
    if theta_dot0 * toward < 0.0 || (theta_dot0 == 0.0 && a0 * toward <= 0.0) {
        return Err(Error::BoundaryUnreachable(format!(
            "at θ = {theta0} the motion does not head toward θ_s = {theta_s} (θ̇ = {theta_dot0}, θ̈ = {a0})"
        )));
    }
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = accel(y[0], y[1]);
    };
    let target = theta_s + side * delta;
    let event = move |_t: f64, y: &[f64]| (y[0] - target) * side;
    let opts = AdaptiveOptions::default().with_max_step(MAX_SAMPLE_STEP);
    let mut samples = Vec::new();
    let mut reversed = false;
    let mut observer = |t: f64, y: &[f64]| {
        if samples.len() > 1 && y[1] * toward <= 0.0 {
            reversed = true;
            return Control::Stop;
        }
        samples.push(ScalarSample { t, theta: y[0], theta_dot: y[1], theta_ddot: accel(y[0], y[1]) });
        Control::Continue
    };
    let out = dopri5(rhs, 0.0, &[theta0, theta_dot0], MAX_BRANCH_TIME, &opts, Some(&event), &mut observer);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let out = out?;
    if reversed {
        return Err(Error::BoundaryUnreachable(format!(
            "velocity reversed near t = {} at θ = {} before reaching θ_s = {theta_s}",
            out.t, out.y[0]
        )));
    }
    if !out.event {
        return Err(Error::BoundaryUnreachable(format!(
            "θ_s = {theta_s} not reached from θ = {theta0} within t = {MAX_BRANCH_TIME}"
        )));
    }
    Ok(Branch { samples, duration: out.t })
}

const GL5_NODES: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL5_WEIGHTS: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

/// Cubic Hermite model of `y = θ̇²` on `[θ_s, θ_a]` (either order).
struct Patch {
    theta_s: f64,
    theta_a: f64,
    y_s: f64,
    dy_s: f64,
    y_a: f64,
    dy_a: f64,
}

impl Patch {
    fn y(&self, theta: f64) -> (f64, f64) {
        let h = self.theta_a - self.theta_s;
        let s = (theta - self.theta_s) / h;
        let (s2, s3) = (s * s, s * s * s);
        let y = (2.0 * s3 - 3.0 * s2 + 1.0) * self.y_s
            + (s3 - 2.0 * s2 + s) * h * self.dy_s
            + (-2.0 * s3 + 3.0 * s2) * self.y_a
            + (s3 - s2) * h * self.dy_a;
        let dy = (6.0 * s2 - 6.0 * s) / h * self.y_s
            + (3.0 * s2 - 4.0 * s + 1.0) * self.dy_s
            + (-6.0 * s2 + 6.0 * s) / h * self.y_a
            + (3.0 * s2 - 2.0 * s) * self.dy_a;
        (y, dy)
    }

    /// Travel time `∫ dθ / √y` from `θ_s` to `theta`.
    fn time_to(&self, theta: f64) -> f64 {
        let (a, b) = (self.theta_s, theta);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        GL5_NODES
            .iter()
            .zip(GL5_WEIGHTS)
            .map(|(x, w)| w / self.y(mid + half * x).0.sqrt())
            .sum::<f64>()
            * half.abs()
    }

    /// Samples from the singular point to the patch boundary, timed from `θ_s`.
    fn samples(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut out = Vec::with_capacity(PATCH_PIECES + 1);
        let mut elapsed = 0.0;
        let mut prev = self.theta_s;
        for k in 0..=PATCH_PIECES {
            let theta = self.theta_s + (self.theta_a - self.theta_s) * k as f64 / PATCH_PIECES as f64;
            if k > 0 {
                let (a, b) = (prev, theta);
                let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                elapsed += GL5_NODES
                    .iter()
                    .zip(GL5_WEIGHTS)
                    .map(|(x, w)| w / self.y(mid + half * x).0.sqrt())
                    .sum::<f64>()
                    * half.abs();
            }
            let (y, dy) = self.y(theta);
            out.push((elapsed, theta, y.sqrt(), 0.5 * dy));
            prev = theta;
        }
        out
    }
}

/// Solves the two-point problem `θ(t₁) = θ₁, θ̇(t₁) = θ̇₁, θ(t₂) = θ₂, θ̇(t₂) = θ̇₂`
/// through the singular point, with the time origin at the crossing `θ(0) = θ_s`.
///
/// The endpoint data are matched exactly; the interior is determined by the
/// dynamics. If several crossings were possible the first is returned.
pub fn solve_boundary(
    model: &ReducedModel,
    report: &SingularityReport,
    theta1: f64,
    theta_dot1: f64,
    theta2: f64,
    theta_dot2: f64,
) -> Result<ScalarSolution> {
    solve_boundary_with(model, report, theta1, theta_dot1, theta2, theta_dot2, DEFAULT_PATCH_WIDTH)
}

pub fn solve_boundary_with(
    model: &ReducedModel,
    report: &SingularityReport,
    theta1: f64,
    theta_dot1: f64,
    theta2: f64,
    theta_dot2: f64,
    delta: f64,
) -> Result<ScalarSolution> {
    if [theta1, theta_dot1, theta2, theta_dot2].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("boundary data"));
    }
    let sp = report.singular_point()?;
    let theta_s = sp.theta_s;
    if !(theta1 < theta_s && theta_s < theta2) {
        return Err(Error::Precondition(format!("need θ₁ < θ_s < θ₂, got {theta1} < {theta_s} < {theta2}")));
    }
    if theta_dot1 < 0.0 || theta_dot2 < 0.0 {
        return Err(Error::Precondition("endpoint velocities must be non-negative".into()));
    }
    if !(delta > 0.0) || theta_s - delta <= theta1 || theta_s + delta >= theta2 {
        return Err(Error::Precondition(format!("patch width {delta} does not fit inside [θ₁, θ₂]")));
    }
    for k in 0..=512 {
        let th = theta1 + (theta2 - theta1) * k as f64 / 512.0;
        if model.oriented(th, sp.orientation)?.gamma <= 0.0 {
            return Err(Error::Precondition(format!("γ is not positive at θ = {th}")));
        }
    }
    let a_s = singular_acceleration(model, &sp)?;
    let y_s = sp.v_s * sp.v_s;

    // Left branch runs forward in time from θ₁; the right branch is integrated from
    // θ₂ in reversed time (the reduced dynamics are even in θ̇).
    let left = approach(model, theta_s, delta, theta1, theta_dot1)?;
    let right = approach(model, theta_s, delta, theta2, -theta_dot2)?;

    let patch_for = |b: &Branch| {
        let last = b.samples.last().expect("branch has samples");
        // dy/dθ = 2 θ̈ regardless of the direction of travel.
        Patch {
            theta_s,
            theta_a: last.theta,
            y_s,
            dy_s: 2.0 * a_s,
            y_a: last.theta_dot * last.theta_dot,
            dy_a: 2.0 * last.theta_ddot,
        }
    };
    let lp = patch_for(&left);
    let rp = patch_for(&right);
    let patch_mismatch = [&lp, &rp]
        .iter()
        .map(|p| (p.y_a - (p.y_s + p.dy_s * (p.theta_a - theta_s))).abs())
        .fold(0.0, f64::max);

    let t1 = -(left.duration + lp.time_to(lp.theta_a));
    let t2 = right.duration + rp.time_to(rp.theta_a);

    let mut samples: Vec<ScalarSample> = Vec::new();
    let push = |samples: &mut Vec<ScalarSample>, s: ScalarSample| {
        if samples.last().is_none_or(|p| s.t > p.t + 1e-14) {
            samples.push(s);
        }
    };
    for s in &left.samples {
        push(&mut samples, ScalarSample { t: t1 + s.t, ..*s });
    }
    for &(el, theta, v, acc) in lp.samples().iter().rev() {
        push(&mut samples, ScalarSample { t: -el, theta, theta_dot: v, theta_ddot: acc });
    }
    for &(el, theta, v, acc) in rp.samples().iter().skip(1) {
        push(&mut samples, ScalarSample { t: el, theta, theta_dot: v, theta_ddot: acc });
    }
    for s in right.samples.iter().rev() {
        push(
            &mut samples,
            ScalarSample { t: t2 - s.t, theta: s.theta, theta_dot: -s.theta_dot, theta_ddot: s.theta_ddot },
        );
    }
    // The branch endpoints are the exact boundary data.
    if let Some(first) = samples.first_mut() {
        first.t = t1;
    }
    if let Some(last) = samples.last_mut() {
        last.t = t2;
    }

    Ok(ScalarSolution {
        samples,
        t_s: 0.0,
        theta_s,
        start: Endpoint { t: t1, theta: theta1, theta_dot: theta_dot1 },
        end: Endpoint { t: t2, theta: theta2, theta_dot: theta_dot2 },
        patch_mismatch,
    })
}

/// A solution with turning points at both ends extended to a periodic motion by
/// appending its time reversal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicScalar {
    pub base: ScalarSolution,
    pub period: f64,
}

const TURNING_TOL: f64 = 1e-12;

pub fn make_periodic(sol: ScalarSolution) -> Result<PeriodicScalar> {
    if sol.start.theta_dot.abs() > TURNING_TOL || sol.end.theta_dot.abs() > TURNING_TOL {
        return Err(Error::Precondition(format!(
            "periodic extension needs turning points at both ends (θ̇₁ = {}, θ̇₂ = {})",
            sol.start.theta_dot, sol.end.theta_dot
        )));
    }
    let period = 2.0 * sol.duration();
    Ok(PeriodicScalar { base: sol, period })
}

impl PeriodicScalar {
    /// `(θ, θ̇, θ̈)` at any `t`; the motion follows the base solution on `[t₁, t₂]` and
    /// retraces it backward on `[t₂, t₁ + T]`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64, f64)> {
        if !t.is_finite() {
            return Err(Error::NonFinite("evaluation time"));
        }
        let (t1, t2) = (self.base.start.t, self.base.end.t);
        let rel = t1 + (t - t1).rem_euclid(self.period);
        if rel <= t2 {
            self.base.eval(rel)
        } else {
            let (th, v, a) = self.base.eval((2.0 * t2 - rel).max(t1))?;
            Ok((th, -v, a))
        }
    }

    /// Singular crossings within one period starting at `t = 0`.
    pub fn crossing_times(&self) -> [f64; 2] {
        let back = 2.0 * self.base.end.t - self.base.t_s;
        [self.base.t_s.rem_euclid(self.period), back.rem_euclid(self.period)]
    }
}

/// Full-state motion `q = φ(θ(t))` with feedforward input recovered from the dynamics.
#[derive(Clone)]
pub struct LiftedSource {
    pub sys: Arc<dyn MechanicalSystem>,
    pub vhc: ParametricVhc,
    pub scalar: PeriodicScalar,
}

/// Lift residuals above this are reported as an inconsistent VHC/solution pair.
const LIFT_RESIDUAL_TOL: f64 = 1e-6;

impl TrajectorySource for LiftedSource {
    fn period(&self) -> f64 {
        self.scalar.period
    }

    fn point(&self, t: f64) -> Result<TrajectoryPoint> {
        let (theta, theta_dot, theta_ddot) = self.scalar.eval(t)?;
        let q = self.vhc.phi(theta)?;
        let d1 = self.vhc.dphi(theta)?;
        let d2 = self.vhc.ddphi(theta)?;
        let qdot = &d1 * theta_dot;
        let qddot = d2 * (theta_dot * theta_dot) + d1 * theta_ddot;
        let rec = inverse_input(self.sys.as_ref(), &q, &qdot, &qddot)?;
        if rec.residual > LIFT_RESIDUAL_TOL {
            return Err(Error::Inconsistent { t, residual: rec.residual });
        }
        Ok(TrajectoryPoint { t, theta, theta_dot, q, qdot, qddot, u: rec.u })
    }
}

/// Lifts a periodic scalar motion through the VHC and samples it at `n` points per period.
pub fn lift(
    vhc: &ParametricVhc,
    sol: &PeriodicScalar,
    sys: Arc<dyn MechanicalSystem>,
    n: usize,
) -> Result<PeriodicTrajectory> {
    let (lo, hi) = (sol.base.start.theta, sol.base.end.theta);
    if !vhc.contains(lo) || !vhc.contains(hi) {
        return Err(Error::OutOfDomain { value: if vhc.contains(lo) { hi } else { lo }, lo: vhc.domain().0, hi: vhc.domain().1 });
    }
    let source = LiftedSource { sys, vhc: vhc.clone(), scalar: sol.clone() };
    PeriodicTrajectory::sample(Arc::new(source), n)
}

/// Convenience pipeline: check, solve with turning points at `θ₁, θ₂`, extend and lift.
pub fn plan_periodic(
    model: &ReducedModel,
    report: &SingularityReport,
    theta1: f64,
    theta2: f64,
    n: usize,
) -> Result<(PeriodicScalar, PeriodicTrajectory)> {
    let sol = solve_boundary(model, report, theta1, 0.0, theta2, 0.0)?;
    let periodic = make_periodic(sol)?;
    let traj = lift(&model.vhc, &periodic, model.sys.clone(), n)?;
    Ok((periodic, traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vhc::{check_theorem1, family_model, FamilyParameters, DEFAULT_CHECK_GRID};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn tic_toc(interval: (f64, f64)) -> (ReducedModel, SingularityReport) {
        let m = ReducedModel::tic_toc(interval);
        let r = check_theorem1(&m, DEFAULT_CHECK_GRID).unwrap();
        (m, r)
    }

    #[test]
    fn hermite5_reproduces_quintics() {
        let f = |t: f64| (1.0 + 2.0 * t - t * t + 0.5 * t.powi(3) - 0.3 * t.powi(4) + 0.1 * t.powi(5), 2.0 - 2.0 * t + 1.5 * t * t - 1.2 * t.powi(3) + 0.5 * t.powi(4), -2.0 + 3.0 * t - 3.6 * t * t + 2.0 * t.powi(3));
        let mk = |t: f64| {
            let (p, v, a) = f(t);
            ScalarSample { t, theta: p, theta_dot: v, theta_ddot: a }
        };
        let (a, b) = (mk(0.3), mk(1.1));
        for t in [0.3, 0.5, 0.77, 1.1] {
            let (p, v, acc) = hermite5(&a, &b, t);
            let (ep, ev, ea) = f(t);
            assert!((p - ep).abs() < 1e-13 && (v - ev).abs() < 1e-12 && (acc - ea).abs() < 1e-11);
        }
    }

    #[test]
    fn escape_step_examples() {
        let (m, r) = tic_toc((-2.0, 2.0));
        let sp = r.singular_point().unwrap();
        assert!(singular_acceleration(&m, &sp).unwrap().abs() < 1e-8);
        let (th, v) = escape_singularity(&m, &r, 1.0, 1e-4).unwrap();
        assert!((th - 1e-4).abs() < 1e-12 && (v - 1.0).abs() < 1e-11);
        assert!(escape_singularity(&m, &r, 1.0, 1e-2).is_err());

        let q = nalgebra::DVector::from_column_slice(&[0.0, 0.0, FRAC_PI_4]);
        let p = FamilyParameters { psi_s: FRAC_PI_4, k1: 1.0, k2: 2.0, k3: -1.0, theta_max: 0.35 };
        let fm = family_model(&q, &p).unwrap();
        let fr = check_theorem1(&fm, DEFAULT_CHECK_GRID).unwrap();
        let a_s = singular_acceleration(&fm, &fr.singular_point().unwrap()).unwrap();
        assert!((a_s - 2f64.sqrt()).abs() < 1e-8, "{a_s}");
    }

    #[test]
    fn failed_report_is_refused() {
        let q = nalgebra::DVector::from_column_slice(&[0.0, 0.0, FRAC_PI_2]);
        let p = FamilyParameters { psi_s: FRAC_PI_2, k1: 1.0, k2: 2.0, k3: 1.0, theta_max: 0.5 };
        let m = family_model(&q, &p).unwrap();
        let r = check_theorem1(&m, DEFAULT_CHECK_GRID).unwrap();
        assert!(escape_singularity(&m, &r, 1.0, 1e-4).is_err());
        assert!(solve_boundary(&m, &r, -0.4, 0.0, 0.4, 0.0).is_err());
    }

    #[test]
    fn symmetric_tic_toc_is_sine() {
        let (m, r) = tic_toc((-2.0, 2.0));
        let sol = solve_boundary(&m, &r, -1.0, 0.0, 1.0, 0.0).unwrap();
        assert!((sol.start.t + FRAC_PI_2).abs() < 1e-7, "{}", sol.start.t);
        assert!((sol.end.t - FRAC_PI_2).abs() < 1e-7, "{}", sol.end.t);
        assert!(sol.max_residual(&m).unwrap() < 1e-8);
        let mut worst: f64 = 0.0;
        for k in 0..=2000 {
            let t = sol.start.t + sol.duration() * k as f64 / 2000.0;
            worst = worst.max((sol.eval(t).unwrap().0 - t.sin()).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn asymmetric_tic_toc_matches_piecewise_closed_form() {
        let (m, r) = tic_toc((-2.5, 2.5));
        let sol = solve_boundary(&m, &r, -1.0, 0.0, 2.0, 0.0).unwrap();
        assert!((sol.end.t - PI).abs() < 1e-7);
        let periodic = make_periodic(sol).unwrap();
        assert!((periodic.period - 3.0 * PI).abs() < 1e-6);
        let mut worst: f64 = 0.0;
        for k in 0..=3000 {
            let t = -FRAC_PI_2 + PI * 1.5 * k as f64 / 3000.0;
            let exact = if t < 0.0 { t.sin() } else { 2.0 * (t / 2.0).sin() };
            worst = worst.max((periodic.eval(t).unwrap().0 - exact).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn nonzero_endpoint_velocity_is_matched() {
        let (m, r) = tic_toc((-2.0, 2.0));
        let sol = solve_boundary(&m, &r, -0.8, 0.3, 0.6, 1.1).unwrap();
        assert_eq!(sol.start.theta_dot, 0.3);
        let (th, v, _) = sol.eval(sol.end.t).unwrap();
        assert!((th - 0.6).abs() < 1e-12 && (v - 1.1).abs() < 1e-12);
        assert!(sol.max_residual(&m).unwrap() < 1e-8);
        // y = θ̇² = 1 + Cθ² on each side.
        let c = (1.1f64.powi(2) - 1.0) / 0.36;
        let (th, v, _) = sol.eval(0.5 * sol.end.t).unwrap();
        assert!((v * v - (1.0 + c * th * th)).abs() < 1e-8);
        assert!(make_periodic(sol).is_err());
    }

    #[test]
    fn bad_brackets_are_rejected() {
        let (m, r) = tic_toc((-2.0, 2.0));
        assert!(matches!(solve_boundary(&m, &r, 0.2, 0.0, 1.0, 0.0), Err(Error::Precondition(_))));
        assert!(matches!(solve_boundary(&m, &r, -1.0, -0.1, 1.0, 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn periodic_extension_wraps() {
        let (m, r) = tic_toc((-2.0, 2.0));
        let p = make_periodic(solve_boundary(&m, &r, -1.0, 0.0, 1.0, 0.0).unwrap()).unwrap();
        assert!((p.period - 2.0 * PI).abs() < 1e-6);
        for t in [-7.0, -1.0, 0.4, 2.0, 3.5, 5.9, 13.0] {
            let (th, v, a) = p.eval(t).unwrap();
            let tt = t * 2.0 * PI / p.period;
            assert!((th - tt.sin()).abs() < 1e-6 && (v - tt.cos()).abs() < 1e-6 && (a + tt.sin()).abs() < 1e-5);
        }
        let c = p.crossing_times();
        assert!(c[0].abs() < 1e-12 && (c[1] - PI).abs() < 1e-6);
    }
}
