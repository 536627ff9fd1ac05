//! Fixed-step simulation of the nonlinear model under the transverse feedback
//! `u = u*(τ) + K(τ) ρ`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::io::Write;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::mech::{eval_accel, MechanicalSystem, PhaseState};
use crate::ode::rk4_step;
use crate::trajectory::trajectory_header;
use crate::transverse::{GainSchedule, TransverseChart};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    /// Hold the input over each step instead of re-evaluating it at every stage.
    pub zero_order_hold: bool,
    /// Stop once `‖(q, q̇)‖` exceeds this bound.
    pub divergence_bound: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { dt: 0.01, horizon: 6.0 * std::f64::consts::PI, zero_order_hold: false, divergence_bound: 1e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSample {
    pub t: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub u: DVector<f64>,
    pub tau: f64,
    /// Transverse coordinates, absent while the state is outside the chart tube.
    pub rho: Option<DVector<f64>>,
}

impl SimSample {
    pub fn orbit_error(&self) -> Option<f64> {
        self.rho.as_ref().map(|r| r.norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub dt: f64,
    pub samples: Vec<SimSample>,
    pub closed_loop: bool,
    pub zero_order_hold: bool,
    /// Set when the run stopped early on the divergence guard.
    pub diverged: Option<String>,
}

impl SimulationResult {
    pub fn last(&self) -> &SimSample {
        self.samples.last().expect("at least the initial sample")
    }

    pub fn final_orbit_error(&self) -> Option<f64> {
        self.last().orbit_error()
    }

    /// Largest absolute value among all logged states and inputs.
    pub fn max_signal(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.q.iter().chain(s.qdot.iter()).chain(s.u.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum `‖ρ‖` over each consecutive window of length `period`; windows with
    /// any sample outside the tube report `None`.
    pub fn envelope(&self, period: f64) -> Vec<Option<f64>> {
        let per = (period / self.dt).round().max(1.0) as usize;
        self.samples
            .chunks(per)
            .map(|c| c.iter().map(|s| s.orbit_error()).try_fold(0.0f64, |m, e| e.map(|e| m.max(e))))
            .collect()
    }

    /// The trajectory schema (`theta`, `thetadot` carry `x`, `ẋ`, the chart's phase
    /// coordinates) followed by `tau,rho1..rhoK`; `ρ` cells are empty outside the tube.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let first = &self.samples[0];
        let (n, m) = (first.q.len(), first.u.len());
        let k = 2 * n - 1;
        let mut header = trajectory_header(n, m);
        header.push("tau".into());
        header.extend((1..=k).map(|i| format!("rho{i}")));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![fmt_f64(s.t), fmt_f64(s.q[0]), fmt_f64(s.qdot[0])];
            row.extend(s.q.iter().chain(s.qdot.iter()).chain(s.u.iter()).map(|v| fmt_f64(*v)));
            row.push(fmt_f64(s.tau));
            match &s.rho {
                Some(r) => row.extend(r.iter().map(|v| fmt_f64(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), k)),
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Feedback `u*(τ) + K(τ) ρ` at a stacked state, with the coordinates used.
pub fn feedback(
    chart: &dyn TransverseChart,
    gains: Option<&GainSchedule>,
    x: &[f64],
) -> Result<(DVector<f64>, f64, DVector<f64>)> {
    let (tau, rho) = chart.coordinates(&DVector::from_column_slice(x))?;
    let mut u = chart.reference(tau)?.u;
    if let Some(g) = gains {
        u += g.eval(tau) * &rho;
    }
    Ok((u, tau, rho))
}

/// Classic RK4 with step `dt` from `x0` over `[0, horizon]`. `gains = None` applies the
/// nominal input `u*(τ)` only.
pub fn run_closed_loop(
    sys: &dyn MechanicalSystem,
    chart: &dyn TransverseChart,
    gains: Option<&GainSchedule>,
    x0: &PhaseState,
    opts: &SimOptions,
) -> Result<SimulationResult> {
    if !(opts.dt > 0.0) || !(opts.horizon >= 0.0) || !opts.dt.is_finite() || !opts.horizon.is_finite() {
        return Err(Error::Precondition(format!("invalid step {} or horizon {}", opts.dt, opts.horizon)));
    }
    let n = sys.dof();
    if x0.q.len() != n || x0.qdot.len() != n {
        return Err(Error::Precondition("initial state has the wrong dimension".into()));
    }
    if x0.q.iter().chain(x0.qdot.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    let steps = (opts.horizon / opts.dt).round() as usize;
    let radius = chart.radius();
    let mut x = x0.to_vec();
    let mut samples = Vec::with_capacity(steps + 1);
    let mut diverged = None;

    let log = |t: f64, x: &[f64]| -> Result<SimSample> {
        let (u, tau, rho) = feedback(chart, gains, x)?;
        let inside = rho.norm() <= radius;
        let s = PhaseState::from_stacked(x);
        Ok(SimSample { t, q: s.q, qdot: s.qdot, u, tau, rho: inside.then_some(rho) })
    };

    for k in 0..=steps {
        let t = k as f64 * opts.dt;
        let sample = log(t, &x)?;
        if sample.u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control input"));
        }
        let held = sample.u.clone();
        samples.push(sample);
        if k == steps {
            break;
        }
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let rhs = |_t: f64, y: &[f64]| -> Vec<f64> {
            let state = PhaseState::from_stacked(y);
            let u = if opts.zero_order_hold {
                Ok(held.clone())
            } else {
                feedback(chart, gains, y).map(|(u, _, _)| u)
            };
            match u.and_then(|u| eval_accel(sys, &state, &u)) {
                Ok(acc) => state.qdot.iter().chain(acc.iter()).copied().collect(),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    vec![f64::NAN; 2 * n]
                }
            }
        };
        x = rk4_step(&rhs, t, &x, opts.dt);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > opts.divergence_bound {
            diverged = Some(format!("‖(q, q̇)‖ = {norm:e} exceeded {:e} at t = {}", opts.divergence_bound, t + opts.dt));
            break;
        }
    }
    Ok(SimulationResult {
        dt: opts.dt,
        samples,
        closed_loop: gains.is_some(),
        zero_order_hold: opts.zero_order_hold,
        diverged,
    })
}
