//! Run configuration: a single JSON document with documented defaults; command-line
//! flags override individual keys.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VhcSpec {
    /// `φ(θ) = (θ, −θ²/2, π/2 − arctan 2θ)`.
    TicToc,
    /// Family through `q_s = (0, 0, ψ_s)` with explicit parameters.
    Family { psi_s: f64, k1: f64, k2: f64, k3: f64, theta_max: f64 },
    /// Family through `q_s = (0, 0, ψ_s)` with parameters from the grid search.
    Auto { psi_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    /// Left turning point; defaults to −1 (tic-toc) or −0.8·θ_max (family).
    pub theta1: Option<f64>,
    /// Right turning point; defaults to 1 (tic-toc) or 0.8·θ_max (family).
    pub theta2: Option<f64>,
    pub theta_dot1: f64,
    pub theta_dot2: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self { theta1: None, theta2: None, theta_dot1: 0.0, theta_dot2: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrConfig {
    /// Diagonal of `Q` (length 5).
    pub q_diag: Vec<f64>,
    /// Diagonal of `R` (length 2).
    pub r_diag: Vec<f64>,
    /// Multiplies the linearized input matrix; 0 produces an uncontrollable model.
    pub input_scale: f64,
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self { q_diag: vec![1.0; 5], r_diag: vec![1.0; 2], input_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub q0: Vec<f64>,
    pub qdot0: Vec<f64>,
    pub open_loop: bool,
    pub zero_order_hold: bool,
    pub tube_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: 6.0 * PI,
            q0: vec![0.1, -0.5, 0.0],
            qdot0: vec![0.0; 3],
            open_loop: false,
            zero_order_hold: false,
            tube_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Singular attitudes for `sweep` / `plan --sweep`.
    pub psi_s: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { psi_s: vec![PI / 4.0, PI / 2.0, 3.0 * PI / 4.0, 5.0 * PI / 4.0, 3.0 * PI / 2.0, 7.0 * PI / 4.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Only `pvtol` is available.
    pub model: String,
    pub vhc: VhcSpec,
    pub boundary: BoundaryConfig,
    /// Interval for the singular-point check; defaults to `[−2, 2]` widened to cover the
    /// boundary (tic-toc) or `(−θ_max, θ_max)` (family).
    pub interval: Option<[f64; 2]>,
    /// Grid for the zero scan of `α`.
    pub check_grid: usize,
    /// Trajectory samples per period.
    pub samples: usize,
    /// Nodes of the transverse linearization.
    pub grid: usize,
    pub lqr: LqrConfig,
    pub sim: SimConfig,
    pub sweep: SweepConfig,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "pvtol".into(),
            vhc: VhcSpec::TicToc,
            boundary: BoundaryConfig::default(),
            interval: None,
            check_grid: 2048,
            samples: 1000,
            grid: 512,
            lqr: LqrConfig::default(),
            sim: SimConfig::default(),
            sweep: SweepConfig::default(),
            output: PathBuf::from("out"),
        }
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() { Ok(()) } else { Err(usage(format!("{name} must be finite"))) }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Checks every key before any computation starts.
    pub fn validate(&self) -> Result<()> {
        if self.model != "pvtol" {
            return Err(usage(format!("unknown model '{}' (available: pvtol)", self.model)));
        }
        match &self.vhc {
            VhcSpec::TicToc => {}
            VhcSpec::Family { psi_s, k1, k2, k3, theta_max } => {
                for (n, v) in [("psi_s", psi_s), ("k1", k1), ("k2", k2), ("k3", k3), ("theta_max", theta_max)] {
                    finite(n, *v)?;
                }
                if *theta_max <= 0.0 {
                    return Err(usage("theta_max must be positive"));
                }
            }
            VhcSpec::Auto { psi_s } => finite("psi_s", *psi_s)?,
        }
        for v in [self.boundary.theta1, self.boundary.theta2].into_iter().flatten() {
            finite("boundary", v)?;
        }
        finite("theta_dot1", self.boundary.theta_dot1)?;
        finite("theta_dot2", self.boundary.theta_dot2)?;
        if self.boundary.theta_dot1 < 0.0 || self.boundary.theta_dot2 < 0.0 {
            return Err(usage("boundary velocities must be non-negative"));
        }
        if let Some([lo, hi]) = self.interval {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(usage("interval must be [lo, hi] with lo < hi"));
            }
        }
        if self.check_grid < 3 || self.samples < 500 || self.grid < 256 {
            return Err(usage("check_grid ≥ 3, samples ≥ 500 and grid ≥ 256 are required"));
        }
        let l = &self.lqr;
        if l.q_diag.len() != 5 || l.r_diag.len() != 2 {
            return Err(usage("lqr.q_diag needs 5 entries and lqr.r_diag 2"));
        }
        if l.q_diag.iter().any(|v| !v.is_finite() || *v < 0.0) || l.r_diag.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(usage("Q must be non-negative and R positive"));
        }
        finite("lqr.input_scale", l.input_scale)?;
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt.is_finite() && s.horizon >= 0.0 && s.horizon.is_finite()) {
            return Err(usage("sim.dt must be positive and sim.horizon non-negative"));
        }
        if s.q0.len() != 3 || s.qdot0.len() != 3 || s.q0.iter().chain(&s.qdot0).any(|v| !v.is_finite()) {
            return Err(usage("sim.q0 and sim.qdot0 need 3 finite entries"));
        }
        if !(s.tube_radius > 0.0) {
            return Err(usage("sim.tube_radius must be positive"));
        }
        if self.sweep.psi_s.iter().any(|v| !v.is_finite()) {
            return Err(usage("sweep.psi_s must be finite"));
        }
        Ok(())
    }
}
