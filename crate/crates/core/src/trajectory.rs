//! Periodic full-state trajectories: a continuous source plus uniform samples over
//! one period.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

use crate::error::Result;
use crate::io::fmt_f64;
use crate::mech::{tic_toc_reference, PhaseState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub qddot: DVector<f64>,
    pub u: DVector<f64>,
}

impl TrajectoryPoint {
    pub fn phase_state(&self) -> PhaseState {
        PhaseState { q: self.q.clone(), qdot: self.qdot.clone() }
    }
}

/// A periodic motion that can be evaluated at any time.
pub trait TrajectorySource: Send + Sync {
    fn period(&self) -> f64;
    fn point(&self, t: f64) -> Result<TrajectoryPoint>;
}

/// The tic-toc maneuver in closed form; the VHC parameter is `θ = x = sin t`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TicTocSource;

impl TrajectorySource for TicTocSource {
    fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI
    }

    fn point(&self, t: f64) -> Result<TrajectoryPoint> {
        let p = tic_toc_reference(t);
        Ok(TrajectoryPoint {
            t,
            theta: t.sin(),
            theta_dot: t.cos(),
            q: p.q,
            qdot: p.qdot,
            qddot: p.qddot,
            u: p.u,
        })
    }
}

#[derive(Clone)]
pub struct PeriodicTrajectory {
    pub period: f64,
    pub samples: Vec<TrajectoryPoint>,
    source: Arc<dyn TrajectorySource>,
}

impl std::fmt::Debug for PeriodicTrajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodicTrajectory")
            .field("period", &self.period)
            .field("samples", &self.samples.len())
            .finish()
    }
}

impl PeriodicTrajectory {
    /// Samples `source` at `n` uniform times on `[0, T)`.
    pub fn sample(source: Arc<dyn TrajectorySource>, n: usize) -> Result<Self> {
        let period = source.period();
        let samples = (0..n)
            .map(|k| source.point(period * k as f64 / n as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { period, samples, source })
    }

    pub fn tic_toc(n: usize) -> Self {
        Self::sample(Arc::new(TicTocSource), n).expect("closed-form reference cannot fail")
    }

    pub fn source(&self) -> &Arc<dyn TrajectorySource> {
        &self.source
    }

    pub fn point(&self, t: f64) -> Result<TrajectoryPoint> {
        self.source.point(t)
    }

    /// Largest mismatch in `(q, q̇)` between the start and the end of one period.
    pub fn closure_error(&self) -> Result<f64> {
        let a = self.source.point(0.0)?;
        let b = self.source.point(self.period)?;
        Ok((&a.q - &b.q).amax().max((&a.qdot - &b.qdot).amax()))
    }

    /// CSV with header `t,theta,thetadot,x,z,psi,xdot,zdot,psidot,u1,u2` for planar
    /// models; other dimensions use `q1..qn,qdot1..qdotn,u1..um`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.samples.first().map_or(3, |s| s.q.len());
        let m = self.samples.first().map_or(2, |s| s.u.len());
        writeln!(w, "{}", trajectory_header(n, m).join(","))?;
        for s in &self.samples {
            let mut row = vec![fmt_f64(s.t), fmt_f64(s.theta), fmt_f64(s.theta_dot)];
            row.extend(s.q.iter().chain(s.qdot.iter()).chain(s.u.iter()).map(|v| fmt_f64(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn trajectory_header(n: usize, m: usize) -> Vec<String> {
    let mut h: Vec<String> = vec!["t".into(), "theta".into(), "thetadot".into()];
    if n == 3 {
        h.extend(["x", "z", "psi", "xdot", "zdot", "psidot"].map(String::from));
    } else {
        h.extend((1..=n).map(|i| format!("q{i}")));
        h.extend((1..=n).map(|i| format!("qdot{i}")));
    }
    h.extend((1..=m).map(|i| format!("u{i}")));
    h
}
