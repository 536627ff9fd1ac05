//! `svhc` command-line interface: plan, certify, stabilize, simulate and sweep.
//!
//! Every run writes into one output directory: `config.resolved.json`, the data
//! files of the command, `report.json` and `metadata.json` (the only file carrying
//! wall-clock information). Failures add `error.json`.

pub mod config;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::feasibility::{
    accessibility_along, accessibility_det, accessibility_zeros, certify_no_regular_vhc, AccessibilityMethod,
    NoVhcCertificate,
};
use crate::io::{fmt_f64, write_json};
use crate::mech::{PhaseState, Pvtol};
use crate::sim::{run_closed_loop, SimOptions};
use crate::singular_solver::{make_periodic, lift, singular_acceleration, solve_boundary, PeriodicScalar};
use crate::trajectory::PeriodicTrajectory;
use crate::transverse::lqr::riccati_residual;
use crate::transverse::{
    gramian, linearize, monodromy, orthogonal_linearization, periodic_lqr, to_transverse, GainSchedule, LtvModel,
    Multiplier, TicTocChart,
};
use crate::vhc::{check_theorem1, family_model, find_family_parameters, FamilyParameters, ReducedModel, SingularityReport};

pub use config::{RunConfig, VhcSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONDITION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "svhc", version, about = "Plan, certify and stabilize periodic motions through singular virtual holonomic constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the singular point, solve the reduced dynamics and lift the periodic orbit.
    Plan {
        #[command(flatten)]
        opts: Overrides,
        /// Run the family sweep over `sweep.psi_s` instead of a single plan.
        #[arg(long)]
        sweep: bool,
    },
    /// Certify that no regular VHC contains the planned orbit; tabulate accessibility.
    Certify {
        #[command(flatten)]
        opts: Overrides,
    },
    /// Transverse linearization, Gramian, periodic LQR gains and monodromy spectra.
    Stabilize {
        #[command(flatten)]
        opts: Overrides,
    },
    /// Closed-loop simulation of the tic-toc orbit under the transverse feedback.
    Simulate {
        #[command(flatten)]
        opts: Overrides,
    },
    /// Plan the constraint family for several singular attitudes in parallel.
    Sweep {
        #[command(flatten)]
        opts: Overrides,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON configuration file; keys not given keep their defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory (config key `output`, default `out`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Use the tic-toc constraint.
    #[arg(long, conflicts_with_all = ["psi_s", "k1"])]
    pub tic_toc: bool,
    /// Singular attitude ψ_s of the constraint family; without k1/k2/k3 the parameters are searched.
    #[arg(long, allow_hyphen_values = true)]
    pub psi_s: Option<f64>,
    /// Family parameter k1 (needs --psi-s, --k2, --k3).
    #[arg(long, allow_hyphen_values = true, requires_all = ["psi_s", "k2", "k3"])]
    pub k1: Option<f64>,
    /// Family parameter k2.
    #[arg(long, allow_hyphen_values = true, requires = "k1")]
    pub k2: Option<f64>,
    /// Family parameter k3.
    #[arg(long, allow_hyphen_values = true, requires = "k1")]
    pub k3: Option<f64>,
    /// Half-width of the family interval (default 0.5).
    #[arg(long, requires = "k1")]
    pub theta_max: Option<f64>,
    /// Left turning point θ₁.
    #[arg(long, allow_hyphen_values = true)]
    pub theta1: Option<f64>,
    /// Right turning point θ₂.
    #[arg(long, allow_hyphen_values = true)]
    pub theta2: Option<f64>,
    /// Trajectory samples per period.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Nodes of the transverse linearization.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Simulation step in seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Simulation horizon in seconds.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Simulate with the nominal input only.
    #[arg(long)]
    pub open_loop: bool,
    /// Hold the input constant over each simulation step.
    #[arg(long)]
    pub hold: bool,
    /// Tube radius on ‖ρ‖ for the transverse chart.
    #[arg(long)]
    pub tube_radius: Option<f64>,
    /// Comma-separated singular attitudes for the sweep.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub psi_s_list: Option<Vec<f64>>,
}

impl Overrides {
    /// Loads the config file (if any) and applies the flags on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            c.output = o.clone();
        }
        if self.tic_toc {
            c.vhc = VhcSpec::TicToc;
        }
        match (self.psi_s, self.k1, self.k2, self.k3) {
            (Some(psi_s), Some(k1), Some(k2), Some(k3)) => {
                c.vhc = VhcSpec::Family { psi_s, k1, k2, k3, theta_max: self.theta_max.unwrap_or(0.5) }
            }
            (Some(psi_s), None, _, _) => c.vhc = VhcSpec::Auto { psi_s },
            _ => {}
        }
        if let Some(v) = self.theta1 {
            c.boundary.theta1 = Some(v);
        }
        if let Some(v) = self.theta2 {
            c.boundary.theta2 = Some(v);
        }
        if let Some(v) = self.samples {
            c.samples = v;
        }
        if let Some(v) = self.grid {
            c.grid = v;
        }
        if let Some(v) = self.dt {
            c.sim.dt = v;
        }
        if let Some(v) = self.horizon {
            c.sim.horizon = v;
        }
        if self.open_loop {
            c.sim.open_loop = true;
        }
        if self.hold {
            c.sim.zero_order_hold = true;
        }
        if let Some(v) = self.tube_radius {
            c.sim.tube_radius = v;
        }
        if let Some(v) = &self.psi_s_list {
            c.sweep.psi_s = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Success,
    /// A checked condition does not hold; the report explains which.
    ConditionFailed(String),
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    kind: &'a str,
    message: String,
    exit_code: i32,
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    started_unix_seconds: f64,
    elapsed_seconds: f64,
    exit_code: i32,
}

fn write_csv_file(path: &Path, f: impl FnOnce(BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    f(BufWriter::new(File::create(path)?))?;
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let (name, opts) = match &cli.command {
        Command::Plan { opts, sweep: false } => ("plan", opts),
        Command::Plan { opts, sweep: true } => ("sweep", opts),
        Command::Certify { opts } => ("certify", opts),
        Command::Stabilize { opts } => ("stabilize", opts),
        Command::Simulate { opts } => ("simulate", opts),
        Command::Sweep { opts } => ("sweep", opts),
    };
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let out_dir = opts.out.clone().unwrap_or_else(|| PathBuf::from("out"));

    let result = opts.resolve().and_then(|cfg| {
        std::fs::create_dir_all(&cfg.output)?;
        write_json(&cfg.output.join("config.resolved.json"), &cfg)?;
        let outcome = match name {
            "plan" => cmd_plan(&cfg, &cfg.output).map(|(o, _)| o),
            "certify" => cmd_certify(&cfg),
            "stabilize" => cmd_stabilize(&cfg),
            "simulate" => cmd_simulate(&cfg),
            _ => cmd_sweep(&cfg),
        }?;
        Ok((cfg.output.clone(), outcome))
    });

    let (dir, code) = match result {
        Ok((dir, Outcome::Success)) => (dir, EXIT_OK),
        Ok((dir, Outcome::ConditionFailed(msg))) => {
            eprintln!("condition check failed: {msg}");
            (dir, EXIT_CONDITION)
        }
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            let dir = opts
                .resolve()
                .map(|c| c.output)
                .unwrap_or_else(|_| out_dir.clone());
            if std::fs::create_dir_all(&dir).is_ok() {
                let _ = write_json(
                    &dir.join("error.json"),
                    &ErrorReport { kind: e.kind(), message: e.to_string(), exit_code: code },
                );
            }
            (dir, code)
        }
    };
    if dir.is_dir() {
        let meta = Metadata {
            command: name,
            version: env!("CARGO_PKG_VERSION"),
            started_unix_seconds: started,
            elapsed_seconds: clock.elapsed().as_secs_f64(),
            exit_code: code,
        };
        let _ = write_json(&dir.join("metadata.json"), &meta);
    }
    code
}

/// The reduced model selected by the config, with the family parameters and the
/// boundary turning points.
pub struct Selection {
    pub model: ReducedModel,
    pub family: Option<FamilyParameters>,
    pub theta1: f64,
    pub theta2: f64,
}

pub fn select_model(cfg: &RunConfig) -> Result<std::result::Result<Selection, String>> {
    let (model, family, default_bounds) = match &cfg.vhc {
        VhcSpec::TicToc => {
            let (t1, t2) = (cfg.boundary.theta1.unwrap_or(-1.0), cfg.boundary.theta2.unwrap_or(1.0));
            let interval = match cfg.interval {
                Some([lo, hi]) => (lo, hi),
                None => ((-2.0f64).min(t1 - 0.5), 2.0f64.max(t2 + 0.5)),
            };
            (ReducedModel::new(Arc::new(Pvtol), crate::vhc::ParametricVhc::tic_toc(), interval)?, None, (-1.0, 1.0))
        }
        spec => {
            let p = match spec {
                VhcSpec::Family { psi_s, k1, k2, k3, theta_max } => {
                    FamilyParameters { psi_s: *psi_s, k1: *k1, k2: *k2, k3: *k3, theta_max: *theta_max }
                }
                VhcSpec::Auto { psi_s } => match find_family_parameters(*psi_s).map_err(as_usage)? {
                    Some(p) => p,
                    None => return Ok(Err(format!("no family parameters in the search box pass the check for ψ_s = {psi_s}"))),
                },
                VhcSpec::TicToc => unreachable!(),
            };
            let q_s = DVector::from_column_slice(&[0.0, 0.0, p.psi_s]);
            let mut model = family_model(&q_s, &p)?;
            if let Some([lo, hi]) = cfg.interval {
                model = ReducedModel::new(model.sys.clone(), model.vhc.clone(), (lo, hi))?;
            }
            (model, Some(p), (-0.8 * p.theta_max, 0.8 * p.theta_max))
        }
    };
    let theta1 = cfg.boundary.theta1.unwrap_or(default_bounds.0);
    let theta2 = cfg.boundary.theta2.unwrap_or(default_bounds.1);
    Ok(Ok(Selection { model, family, theta1, theta2 }))
}

fn as_usage(e: Error) -> Error {
    match e {
        Error::Precondition(m) => Error::Usage(m),
        other => other,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionSummary {
    pub theta1: f64,
    pub theta2: f64,
    pub theta_dot1: f64,
    pub theta_dot2: f64,
    pub t1: f64,
    pub t2: f64,
    pub t_s: f64,
    pub period: Option<f64>,
    pub singular_acceleration: f64,
    pub patch_mismatch: f64,
    pub max_residual: f64,
    pub closure_error: Option<f64>,
    pub max_lift_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub command: &'static str,
    pub vhc: String,
    pub family: Option<FamilyParameters>,
    pub singularity: Option<SingularityReport>,
    pub passed: bool,
    pub message: Option<String>,
    pub solution: Option<SolutionSummary>,
}

/// Planned orbit shared by the downstream commands.
pub struct Plan {
    pub selection: Selection,
    pub periodic: PeriodicScalar,
    pub trajectory: PeriodicTrajectory,
}

/// Runs the planning pipeline and writes `trajectory.csv` and `report.json` into `dir`.
pub fn cmd_plan(cfg: &RunConfig, dir: &Path) -> Result<(Outcome, Option<Plan>)> {
    std::fs::create_dir_all(dir)?;
    let label = match &cfg.vhc {
        VhcSpec::TicToc => "tic_toc".to_string(),
        VhcSpec::Family { .. } => "family".to_string(),
        VhcSpec::Auto { .. } => "family_auto".to_string(),
    };
    let mut report =
        PlanReport { command: "plan", vhc: label, family: None, singularity: None, passed: false, message: None, solution: None };
    let selection = match select_model(cfg)? {
        Ok(s) => s,
        Err(msg) => {
            report.message = Some(msg.clone());
            write_json(&dir.join("report.json"), &report)?;
            return Ok((Outcome::ConditionFailed(msg), None));
        }
    };
    report.family = selection.family;
    let sing = check_theorem1(&selection.model, cfg.check_grid)?;
    report.singularity = Some(sing.clone());
    report.passed = sing.overall;
    if !sing.overall {
        let msg = format!("singular-point conditions fail: {:?}", sing.flags);
        report.message = Some(msg.clone());
        write_json(&dir.join("report.json"), &report)?;
        println!("plan: singular-point check FAILED {:?}", sing.flags);
        return Ok((Outcome::ConditionFailed(msg), None));
    }
    let theta_s = sing.theta_s.expect("passing report has θ_s");
    if !(selection.theta1 < theta_s && theta_s < selection.theta2) {
        return Err(Error::Usage(format!(
            "boundary θ₁ = {}, θ₂ = {} must bracket θ_s = {theta_s}",
            selection.theta1, selection.theta2
        )));
    }
    let (i_lo, i_hi) = selection.model.interval;
    if selection.theta1 < i_lo || selection.theta2 > i_hi {
        return Err(Error::Usage(format!("boundary must lie inside the checked interval [{i_lo}, {i_hi}]")));
    }
    let sol = solve_boundary(
        &selection.model,
        &sing,
        selection.theta1,
        cfg.boundary.theta_dot1,
        selection.theta2,
        cfg.boundary.theta_dot2,
    )?;
    let a_s = singular_acceleration(&selection.model, &sing.singular_point()?)?;
    let mut summary = SolutionSummary {
        theta1: selection.theta1,
        theta2: selection.theta2,
        theta_dot1: cfg.boundary.theta_dot1,
        theta_dot2: cfg.boundary.theta_dot2,
        t1: sol.start.t,
        t2: sol.end.t,
        t_s: sol.t_s,
        period: None,
        singular_acceleration: a_s,
        patch_mismatch: sol.patch_mismatch,
        max_residual: sol.max_residual(&selection.model)?,
        closure_error: None,
        max_lift_residual: None,
    };
    if cfg.boundary.theta_dot1 != 0.0 || cfg.boundary.theta_dot2 != 0.0 {
        report.solution = Some(summary);
        report.message = Some("nonzero endpoint velocities: no periodic extension".into());
        write_json(&dir.join("report.json"), &report)?;
        return Ok((Outcome::Success, None));
    }
    let periodic = make_periodic(sol)?;
    let trajectory = lift(&selection.model.vhc, &periodic, selection.model.sys.clone(), cfg.samples)?;
    let mut lift_res: f64 = 0.0;
    for p in &trajectory.samples {
        let r = crate::mech::inverse_input(selection.model.sys.as_ref(), &p.q, &p.qdot, &p.qddot)?;
        lift_res = lift_res.max(r.residual);
    }
    summary.period = Some(periodic.period);
    summary.closure_error = Some(trajectory.closure_error()?);
    summary.max_lift_residual = Some(lift_res);
    report.solution = Some(summary);
    write_csv_file(&dir.join("trajectory.csv"), |w| trajectory.write_csv(w))?;
    write_json(&dir.join("report.json"), &report)?;
    println!(
        "plan: θ_s = {:.3e}, v_s = {:.6}, period = {:.9}, {} samples -> {}",
        theta_s,
        sing.v_s.unwrap_or(f64::NAN),
        periodic.period,
        trajectory.samples.len(),
        dir.display()
    );
    Ok((Outcome::Success, Some(Plan { selection, periodic, trajectory })))
}

fn require_plan(cfg: &RunConfig) -> Result<std::result::Result<Plan, Outcome>> {
    let (outcome, plan) = cmd_plan(cfg, &cfg.output)?;
    match plan {
        Some(p) => Ok(Ok(p)),
        None => Ok(Err(match outcome {
            Outcome::Success => Outcome::ConditionFailed("a periodic orbit needs turning points at both ends".into()),
            o => o,
        })),
    }
}

#[derive(Serialize)]
struct AccessibilitySummary {
    det_at_start_closed_form: Option<f64>,
    det_at_start_numeric: f64,
    zeros: Vec<f64>,
    min_abs_det: f64,
}

#[derive(Serialize)]
struct CertifyReport {
    command: &'static str,
    certificate: NoVhcCertificate,
    accessibility: AccessibilitySummary,
}

pub fn cmd_certify(cfg: &RunConfig) -> Result<Outcome> {
    let plan = match require_plan(cfg)? {
        Ok(p) => p,
        Err(o) => return Ok(o),
    };
    let sys = plan.selection.model.sys.clone();
    let traj = &plan.trajectory;
    let cert = certify_no_regular_vhc(sys.as_ref(), traj)?;
    let closed = sys.name() == "pvtol";
    let method = if closed { AccessibilityMethod::ClosedForm } else { AccessibilityMethod::NumericBracket };
    let table = accessibility_along(sys.as_ref(), traj, method)?;
    let numeric = accessibility_along(sys.as_ref(), traj, AccessibilityMethod::NumericBracket)?;
    let zeros = accessibility_zeros(sys.as_ref(), traj, method)?;
    let start = traj.point(0.0)?.phase_state();
    let summary = AccessibilitySummary {
        det_at_start_closed_form: closed
            .then(|| accessibility_det(sys.as_ref(), &start, AccessibilityMethod::ClosedForm))
            .transpose()?,
        det_at_start_numeric: accessibility_det(sys.as_ref(), &start, AccessibilityMethod::NumericBracket)?,
        min_abs_det: table.iter().map(|s| s.det.abs()).fold(f64::INFINITY, f64::min),
        zeros,
    };
    write_csv_file(&cfg.output.join("accessibility.csv"), |mut w| {
        use std::io::Write;
        writeln!(w, "t,det_{},det_numeric", if closed { "closed_form" } else { "numeric_ref" })?;
        for (a, b) in table.iter().zip(&numeric) {
            writeln!(w, "{},{},{}", fmt_f64(a.t), fmt_f64(a.det), fmt_f64(b.det))?;
        }
        Ok(())
    })?;
    println!("certify: verdict {:?}", cert.verdict);
    println!("  {:>20} {:>14} {:>14} {:>14}", "t_s", "|B⊥Mq̇|", "‖q̇‖", "dist(G,ImB)");
    for r in &cert.singular_times {
        println!(
            "  {:>20.12} {:>14.3e} {:>14.10} {:>14.10}",
            r.t_s, r.annihilator_residual, r.velocity_norm, r.gravity_distance
        );
    }
    println!("  accessibility zeros at t = {:?}", summary.zeros);
    let report = CertifyReport { command: "certify", certificate: cert, accessibility: summary };
    write_json(&cfg.output.join("report.json"), &report)?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct Spectra {
    gramian_eigenvalues: Vec<f64>,
    open_loop_multipliers: Vec<Multiplier>,
    open_loop_spectral_radius: f64,
    closed_loop_multipliers: Vec<Multiplier>,
    closed_loop_spectral_radius: f64,
}

#[derive(Serialize)]
struct StabilizeReport {
    command: &'static str,
    linearization: &'static str,
    grid: usize,
    period: f64,
    gramian_eigenvalues: Vec<f64>,
    riccati_sweeps: usize,
    riccati_residual: f64,
    max_gain: f64,
    open_loop_spectral_radius: f64,
    closed_loop_spectral_radius: f64,
    orbitally_stable: bool,
}

/// Linearization used for stabilization: the tic-toc chart, or the orthogonal
/// frame for family orbits.
pub fn stabilization_model(cfg: &RunConfig) -> Result<std::result::Result<(LtvModel, &'static str), Outcome>> {
    let model = match cfg.vhc {
        VhcSpec::TicToc => {
            let chart = TicTocChart { radius: cfg.sim.tube_radius };
            (linearize(&chart, &Pvtol, cfg.grid)?, "tic_toc_chart")
        }
        _ => {
            let plan = match require_plan(cfg)? {
                Ok(p) => p,
                Err(o) => return Ok(Err(o)),
            };
            (orthogonal_linearization(plan.selection.model.sys.as_ref(), &plan.trajectory, cfg.grid)?, "orthogonal_frame")
        }
    };
    let (m, kind) = model;
    let m = if cfg.lqr.input_scale != 1.0 { m.with_input_scale(cfg.lqr.input_scale)? } else { m };
    Ok(Ok((m, kind)))
}

fn weights(cfg: &RunConfig) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.lqr.q_diag)),
        DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.lqr.r_diag)),
    )
}

/// Synthesizes the gains and writes the LTV, gains and spectra files.
pub fn stabilize(cfg: &RunConfig) -> Result<std::result::Result<(LtvModel, GainSchedule), Outcome>> {
    let (model, kind) = match stabilization_model(cfg)? {
        Ok(m) => m,
        Err(o) => return Ok(Err(o)),
    };
    let (q, r) = weights(cfg);
    let gram = gramian(&model)?;
    let gains = periodic_lqr(&model, &q, &r)?;
    let open = monodromy(&model, None)?;
    let closed = monodromy(&model, Some(&gains))?;
    write_csv_file(&cfg.output.join("ltv.csv"), |w| model.write_csv(w))?;
    write_csv_file(&cfg.output.join("gains.csv"), |w| gains.write_csv(w))?;
    let spectra = Spectra {
        gramian_eigenvalues: gram.eigenvalues.clone(),
        open_loop_multipliers: open.multipliers.clone(),
        open_loop_spectral_radius: open.spectral_radius,
        closed_loop_multipliers: closed.multipliers.clone(),
        closed_loop_spectral_radius: closed.spectral_radius,
    };
    write_json(&cfg.output.join("spectra.json"), &spectra)?;
    let report = StabilizeReport {
        command: "stabilize",
        linearization: kind,
        grid: model.grid_len(),
        period: model.period,
        gramian_eigenvalues: gram.eigenvalues.clone(),
        riccati_sweeps: gains.sweeps,
        riccati_residual: riccati_residual(&model, &gains, &q, &r)?,
        max_gain: gains.max_abs(),
        open_loop_spectral_radius: open.spectral_radius,
        closed_loop_spectral_radius: closed.spectral_radius,
        orbitally_stable: closed.spectral_radius < 1.0,
    };
    write_json(&cfg.output.join("report.json"), &report)?;
    println!("stabilize: Gramian eigenvalues {}", gram.eigenvalues.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>().join(", "));
    println!(
        "  open-loop spectral radius {:.4}, closed-loop {:.4e} ({} Riccati sweeps)",
        open.spectral_radius, closed.spectral_radius, gains.sweeps
    );
    Ok(Ok((model, gains)))
}

pub fn cmd_stabilize(cfg: &RunConfig) -> Result<Outcome> {
    Ok(match stabilize(cfg)? {
        Ok(_) => Outcome::Success,
        Err(o) => o,
    })
}

#[derive(Serialize)]
struct SimulateReport {
    command: &'static str,
    closed_loop: bool,
    zero_order_hold: bool,
    dt: f64,
    horizon: f64,
    steps: usize,
    initial_tau: f64,
    initial_rho: Vec<f64>,
    initial_inside_tube: bool,
    final_orbit_error: Option<f64>,
    period_envelope: Vec<Option<f64>>,
    max_signal: f64,
    converged: bool,
    diverged: Option<String>,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.vhc != VhcSpec::TicToc {
        return Err(Error::Usage("simulate is available for the tic-toc orbit only".into()));
    }
    let gains = if cfg.sim.open_loop {
        None
    } else {
        match stabilize(cfg)? {
            Ok((_, g)) => Some(g),
            Err(o) => return Ok(o),
        }
    };
    let chart = TicTocChart { radius: cfg.sim.tube_radius };
    let x0 = PhaseState::from_slices(&cfg.sim.q0, &cfg.sim.qdot0)?;
    let start = to_transverse(&chart, &x0)?;
    let opts = SimOptions {
        dt: cfg.sim.dt,
        horizon: cfg.sim.horizon,
        zero_order_hold: cfg.sim.zero_order_hold,
        ..SimOptions::default()
    };
    let res = run_closed_loop(&Pvtol, &chart, gains.as_ref(), &x0, &opts)?;
    write_csv_file(&cfg.output.join("simulation.csv"), |w| res.write_csv(w))?;
    let final_err = res.final_orbit_error();
    let report = SimulateReport {
        command: "simulate",
        closed_loop: res.closed_loop,
        zero_order_hold: res.zero_order_hold,
        dt: res.dt,
        horizon: cfg.sim.horizon,
        steps: res.samples.len() - 1,
        initial_tau: start.tau,
        initial_rho: start.rho.iter().copied().collect(),
        initial_inside_tube: start.inside,
        final_orbit_error: final_err,
        period_envelope: res.envelope(2.0 * std::f64::consts::PI),
        max_signal: res.max_signal(),
        converged: final_err.is_some_and(|e| e < 1e-3),
        diverged: res.diverged.clone(),
    };
    write_json(&cfg.output.join("report.json"), &report)?;
    println!(
        "simulate: {} loop, ‖ρ(0)‖ = {:.4} (inside tube: {}), final ‖ρ‖ = {}",
        if res.closed_loop { "closed" } else { "open" },
        start.norm(),
        start.inside,
        final_err.map_or("outside tube".to_string(), |e| format!("{e:.3e}"))
    );
    if let Some(msg) = res.diverged {
        return Err(Error::Integration(msg));
    }
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct SweepEntry {
    index: usize,
    psi_s: f64,
    directory: String,
    passed: bool,
    family: Option<FamilyParameters>,
    period: Option<f64>,
    message: Option<String>,
}

#[derive(Serialize)]
struct SweepReport {
    command: &'static str,
    runs: Vec<SweepEntry>,
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let entries: Vec<SweepEntry> = cfg
        .sweep
        .psi_s
        .par_iter()
        .enumerate()
        .map(|(index, &psi_s)| {
            let name = format!("psi_{index:02}");
            let dir = cfg.output.join(&name);
            let mut sub = cfg.clone();
            sub.vhc = VhcSpec::Auto { psi_s };
            sub.boundary.theta1 = None;
            sub.boundary.theta2 = None;
            sub.output = dir.clone();
            let entry = |passed, family, period, message| SweepEntry {
                index,
                psi_s,
                directory: name.clone(),
                passed,
                family,
                period,
                message,
            };
            match cmd_plan(&sub, &dir) {
                Ok((Outcome::Success, Some(p))) => {
                    entry(true, p.selection.family, Some(p.periodic.period), None)
                }
                Ok((Outcome::Success, None)) => entry(true, None, None, None),
                Ok((Outcome::ConditionFailed(m), _)) => entry(false, None, None, Some(m)),
                Err(e) => entry(false, None, None, Some(e.to_string())),
            }
        })
        .collect();
    let failed = entries.iter().filter(|e| !e.passed).count();
    write_json(&cfg.output.join("report.json"), &SweepReport { command: "sweep", runs: entries })?;
    Ok(if failed == 0 {
        Outcome::Success
    } else {
        Outcome::ConditionFailed(format!("{failed} sweep run(s) failed"))
    })
}
