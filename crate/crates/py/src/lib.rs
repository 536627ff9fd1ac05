//! Python module `singular_vhc`: thin wrappers over the planner, the certificate,
//! the transverse stabilizer and the simulator.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use singular_vhc::feasibility::{accessibility_det, certify_no_regular_vhc, AccessibilityMethod};
use singular_vhc::mech::{PhaseState, Pvtol};
use singular_vhc::sim::{run_closed_loop, SimOptions};
use singular_vhc::singular_solver::plan_periodic;
use singular_vhc::trajectory::PeriodicTrajectory;
use singular_vhc::transverse::{gramian, linearize, monodromy, periodic_lqr, TicTocChart};
use singular_vhc::vhc::{check_theorem1, find_family_parameters, ReducedModel, DEFAULT_CHECK_GRID};
use singular_vhc::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Usage(_) | Error::Precondition(_) | Error::OutOfDomain { .. } | Error::NonFinite(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn rows(v: impl Iterator<Item = DVector<f64>>) -> Vec<Vec<f64>> {
    v.map(|x| x.iter().copied().collect()).collect()
}

/// Singular-point check of the tic-toc reduced dynamics on `[lo, hi]`.
#[pyfunction]
#[pyo3(signature = (lo = -1.5, hi = 1.5))]
fn check_tic_toc(py: Python<'_>, lo: f64, hi: f64) -> PyResult<Bound<'_, PyDict>> {
    if !(lo < hi) {
        return Err(PyValueError::new_err("need lo < hi"));
    }
    let r = check_theorem1(&ReducedModel::tic_toc((lo, hi)), DEFAULT_CHECK_GRID).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("passed", r.overall)?;
    d.set_item("theta_s", r.theta_s)?;
    d.set_item("v_s", r.v_s)?;
    d.set_item("ratio", r.ratio())?;
    Ok(d)
}

/// Periodic tic-toc motion with turning points `theta1 < 0 < theta2`, lifted to the
/// full state and sampled at `samples` times per period.
#[pyfunction]
#[pyo3(signature = (theta1 = -1.0, theta2 = 1.0, samples = 1000))]
fn plan_tic_toc(py: Python<'_>, theta1: f64, theta2: f64, samples: usize) -> PyResult<Bound<'_, PyDict>> {
    let lo = theta1.min(-2.0) - 0.5;
    let hi = theta2.max(2.0) + 0.5;
    let m = ReducedModel::tic_toc((lo, hi));
    let r = check_theorem1(&m, DEFAULT_CHECK_GRID).map_err(py_err)?;
    let (periodic, traj) = plan_periodic(&m, &r, theta1, theta2, samples).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("period", periodic.period)?;
    d.set_item("t", traj.samples.iter().map(|p| p.t).collect::<Vec<_>>())?;
    d.set_item("theta", traj.samples.iter().map(|p| p.theta).collect::<Vec<_>>())?;
    d.set_item("q", rows(traj.samples.iter().map(|p| p.q.clone())))?;
    d.set_item("qdot", rows(traj.samples.iter().map(|p| p.qdot.clone())))?;
    d.set_item("u", rows(traj.samples.iter().map(|p| p.u.clone())))?;
    Ok(d)
}

/// Grid-searched family parameters for singular attitude `psi_s`, or `None`.
#[pyfunction]
fn find_family(py: Python<'_>, psi_s: f64) -> PyResult<Option<Bound<'_, PyDict>>> {
    let Some(p) = find_family_parameters(psi_s).map_err(py_err)? else {
        return Ok(None);
    };
    let d = PyDict::new(py);
    d.set_item("psi_s", p.psi_s)?;
    d.set_item("k1", p.k1)?;
    d.set_item("k2", p.k2)?;
    d.set_item("k3", p.k3)?;
    d.set_item("theta_max", p.theta_max)?;
    Ok(Some(d))
}

/// No-regular-VHC certificate and accessibility determinant for the tic-toc orbit.
#[pyfunction]
fn certify_tic_toc(py: Python<'_>) -> PyResult<Bound<'_, PyDict>> {
    let traj = PeriodicTrajectory::tic_toc(1000);
    let cert = certify_no_regular_vhc(&Pvtol, &traj).map_err(py_err)?;
    let start = traj.samples[0].phase_state();
    let d = PyDict::new(py);
    d.set_item("positive", cert.is_positive())?;
    d.set_item("singular_times", cert.singular_times.iter().map(|r| r.t_s).collect::<Vec<_>>())?;
    d.set_item(
        "accessibility_det",
        accessibility_det(&Pvtol, &start, AccessibilityMethod::ClosedForm).map_err(py_err)?,
    )?;
    Ok(d)
}

fn weights() -> (DMatrix<f64>, DMatrix<f64>) {
    (DMatrix::identity(5, 5), DMatrix::identity(2, 2))
}

/// Transverse linearization of the tic-toc orbit on `grid` nodes with periodic LQR
/// (Q = I, R = I): Gramian eigenvalues and monodromy spectral radii.
#[pyfunction]
#[pyo3(signature = (grid = 512))]
fn stabilize_tic_toc(py: Python<'_>, grid: usize) -> PyResult<Bound<'_, PyDict>> {
    let (model, gains) = py
        .detach(|| -> singular_vhc::Result<_> {
            let model = linearize(&TicTocChart::default(), &Pvtol, grid)?;
            let (q, r) = weights();
            let gains = periodic_lqr(&model, &q, &r)?;
            Ok((model, gains))
        })
        .map_err(py_err)?;
    let g = gramian(&model).map_err(py_err)?;
    let open = monodromy(&model, None).map_err(py_err)?;
    let closed = monodromy(&model, Some(&gains)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("gramian_eigenvalues", g.eigenvalues)?;
    d.set_item("open_loop_spectral_radius", open.spectral_radius)?;
    d.set_item("closed_loop_spectral_radius", closed.spectral_radius)?;
    d.set_item("closed_loop_multipliers", closed.multipliers.iter().map(|m| (m.real, m.imag)).collect::<Vec<_>>())?;
    Ok(d)
}

/// Simulates the PVTOL from `(q0, qdot0)` under the tic-toc transverse feedback
/// (or the nominal input only when `closed_loop` is false).
#[pyfunction]
#[pyo3(signature = (q0, qdot0, dt = 0.01, horizon = 6.0 * std::f64::consts::PI, closed_loop = true))]
fn simulate_tic_toc(
    py: Python<'_>,
    q0: Vec<f64>,
    qdot0: Vec<f64>,
    dt: f64,
    horizon: f64,
    closed_loop: bool,
) -> PyResult<Bound<'_, PyDict>> {
    let x0 = PhaseState::from_slices(&q0, &qdot0).map_err(py_err)?;
    let res = py
        .detach(|| -> singular_vhc::Result<_> {
            let chart = TicTocChart::default();
            let gains = if closed_loop {
                let model = linearize(&chart, &Pvtol, 512)?;
                let (q, r) = weights();
                Some(periodic_lqr(&model, &q, &r)?)
            } else {
                None
            };
            let opts = SimOptions { dt, horizon, ..SimOptions::default() };
            run_closed_loop(&Pvtol, &chart, gains.as_ref(), &x0, &opts)
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("t", res.samples.iter().map(|s| s.t).collect::<Vec<_>>())?;
    d.set_item("q", rows(res.samples.iter().map(|s| s.q.clone())))?;
    d.set_item("orbit_error", res.samples.iter().map(|s| s.orbit_error()).collect::<Vec<_>>())?;
    d.set_item("final_orbit_error", res.final_orbit_error())?;
    d.set_item("diverged", res.diverged)?;
    Ok(d)
}

/// Runs the `svhc` command line with `args` (without the program name); returns the exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| singular_vhc::cli::run(std::iter::once("svhc".to_string()).chain(args)))
}

#[pymodule]
#[pyo3(name = "singular_vhc")]
fn python_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(check_tic_toc, m)?)?;
    m.add_function(wrap_pyfunction!(plan_tic_toc, m)?)?;
    m.add_function(wrap_pyfunction!(find_family, m)?)?;
    m.add_function(wrap_pyfunction!(certify_tic_toc, m)?)?;
    m.add_function(wrap_pyfunction!(stabilize_tic_toc, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_tic_toc, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
