//! Acceptance suite: one PASS/FAIL line per criterion; exits nonzero if any fails.
//!
//! Expected values that follow from the model are computed here by independent
//! closed forms; reference numbers are used only where no closed form exists.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::time::Instant;

use singular_vhc::feasibility::{accessibility_det, accessibility_zeros, certify_no_regular_vhc, AccessibilityMethod};
use singular_vhc::mech::{tic_toc_reference, PhaseState, Pvtol};
use singular_vhc::sim::{run_closed_loop, SimOptions};
use singular_vhc::singular_solver::{make_periodic, plan_periodic, solve_boundary};
use singular_vhc::trajectory::PeriodicTrajectory;
use singular_vhc::transverse::{
    chart_invert, gramian, gramian_from, linearize, monodromy, orthogonal_linearization, periodic_lqr, transition,
    GainSchedule, LtvModel, TicTocChart, TransverseChart,
};
use singular_vhc::vhc::{check_theorem1, family_model, find_family_parameters, FamilyParameters, ReducedModel};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok { Ok(detail) } else { Err(detail) }
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

/// PVTOL right-hand side written out independently of the library model.
fn pvtol_accel(q: &DVector<f64>, u: &DVector<f64>) -> [f64; 3] {
    let (s, c) = q[2].sin_cos();
    [-s * u[0], c * u[0] - 1.0, u[1]]
}

fn c1() -> Check {
    let clock = Instant::now();
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let t = 2.0 * PI * k as f64 / 999.0;
        let p = tic_toc_reference(t);
        let f = pvtol_accel(&p.q, &p.u);
        for i in 0..3 {
            worst = worst.max((p.qddot[i] - f[i]).abs());
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    ensure(worst < 1e-9 && secs < 1.0, format!("max |q̈* − (Bu* − G)| = {worst:.2e}, {secs:.3} s"))
}

fn c2() -> Check {
    let clock = Instant::now();
    let m = ReducedModel::tic_toc((-1.5, 1.5));
    let (mut wa, mut wb): (f64, f64) = (0.0, 0.0);
    for k in 0..=3000 {
        let th = -1.5 + 3.0 * k as f64 / 3000.0;
        let c = m.coefficients(th).map_err(e)?;
        wa = wa.max((c.alpha / c.gamma - th).abs());
        wb = wb.max((c.beta / c.gamma + 1.0).abs());
    }
    let secs = clock.elapsed().as_secs_f64();
    ensure(
        wa < 1e-10 && wb < 1e-10 && secs < 1.0,
        format!("max |α/γ − θ| = {wa:.2e}, max |β/γ + 1| = {wb:.2e}, {secs:.3} s"),
    )
}

fn c3() -> Check {
    let r = check_theorem1(&ReducedModel::tic_toc((-1.5, 1.5)), 2048).map_err(e)?;
    let (ts, vs, ratio) = (r.theta_s.unwrap_or(f64::NAN), r.v_s.unwrap_or(f64::NAN), r.ratio().unwrap_or(f64::NAN));
    let pass_ok = r.overall && ts.abs() < 1e-12 && (vs - 1.0).abs() < 1e-9 && (ratio + 1.0).abs() < 1e-8;

    // (k₁, k₂, k₃) = (1, 2, 1): α′(0) = k₁k₂ + k₃ = 3 and β(0) = k₃ = 1, so β/α′ = 1/3.
    let q_s = DVector::from_column_slice(&[0.0, 0.0, FRAC_PI_4]);
    let p = FamilyParameters { psi_s: FRAC_PI_4, k1: 1.0, k2: 2.0, k3: 1.0, theta_max: 0.35 };
    let bad = check_theorem1(&family_model(&q_s, &p).map_err(e)?, 2048).map_err(e)?;
    let f = bad.flags;
    let fail_ok = !bad.overall && f.unique_zero && f.slope_positive && f.gamma_positive_on_i && !f.ratio_below_minus_half;
    ensure(
        pass_ok && fail_ok,
        format!(
            "tic-toc θ_s = {ts:.1e}, v_s − 1 = {:.1e}, β/α′ + 1 = {:.1e}; (1,2,1) flags {:?}, ratio {:.4}",
            vs - 1.0,
            ratio + 1.0,
            f,
            bad.ratio().unwrap_or(f64::NAN)
        ),
    )
}

fn c4() -> Check {
    let clock = Instant::now();
    let m = ReducedModel::tic_toc((-2.5, 2.5));
    let r = check_theorem1(&m, 2048).map_err(e)?;
    let sym = make_periodic(solve_boundary(&m, &r, -1.0, 0.0, 1.0, 0.0).map_err(e)?).map_err(e)?;
    let asym = make_periodic(solve_boundary(&m, &r, -1.0, 0.0, 2.0, 0.0).map_err(e)?).map_err(e)?;
    let secs = clock.elapsed().as_secs_f64();
    // θθ̈ − θ̇² + 1 = 0 with θ(0) = 0 and a turning point at θ_i: θ = θ_i sin(t/θ_i) on each side.
    let piecewise = |t: f64, th1: f64, th2: f64| {
        let th = if t < 0.0 { th1 } else { th2 };
        th.abs() * (t / th.abs()).sin()
    };
    let (mut ws, mut wa): (f64, f64) = (0.0, 0.0);
    for k in 0..=4000 {
        let t = -FRAC_PI_2 + 2.0 * PI * k as f64 / 4000.0;
        ws = ws.max((sym.eval(t).map_err(e)?.0 - t.sin()).abs());
        let ta = -FRAC_PI_2 + 1.5 * PI * k as f64 / 4000.0;
        wa = wa.max((asym.eval(ta).map_err(e)?.0 - piecewise(ta, -1.0, 2.0)).abs());
    }
    ensure(
        ws < 1e-6 && wa < 1e-6 && secs < 2.0 && (asym.period - 3.0 * PI).abs() < 1e-6,
        format!("symmetric max err {ws:.2e}, asymmetric max err {wa:.2e}, period 3π err {:.1e}, {secs:.3} s", asym.period - 3.0 * PI),
    )
}

fn c5() -> Check {
    let m = ReducedModel::tic_toc((-2.0, 2.0));
    let r = check_theorem1(&m, 2048).map_err(e)?;
    let (_, traj) = plan_periodic(&m, &r, -1.0, 1.0, 1000).map_err(e)?;
    let (mut wq, mut wu, mut wr): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for p in &traj.samples {
        let refp = tic_toc_reference(p.t);
        wq = wq.max((&p.q - &refp.q).amax());
        wu = wu.max((&p.u - &refp.u).amax());
        // B⊥ = (cos ψ, sin ψ, 0) applied to M q̈ + G.
        let (s, c) = p.q[2].sin_cos();
        wr = wr.max((c * p.qddot[0] + s * (p.qddot[1] + 1.0)).abs());
    }
    ensure(wq < 1e-6 && wu < 1e-6 && wr < 1e-8, format!("max q err {wq:.2e}, max u err {wu:.2e}, B⊥ residual {wr:.2e}"))
}

struct TicTocControl {
    model: LtvModel,
    gains: GainSchedule,
    linearize_secs: f64,
}

fn tic_toc_control() -> Result<TicTocControl, String> {
    let clock = Instant::now();
    let model = linearize(&TicTocChart::default(), &Pvtol, 512).map_err(e)?;
    let linearize_secs = clock.elapsed().as_secs_f64();
    let gains = periodic_lqr(&model, &DMatrix::identity(5, 5), &DMatrix::identity(2, 2)).map_err(e)?;
    Ok(TicTocControl { model, gains, linearize_secs })
}

fn c6(ctl: &TicTocControl) -> Check {
    let clock = Instant::now();
    let g = gramian(&ctl.model).map_err(e)?;
    let secs = ctl.linearize_secs + clock.elapsed().as_secs_f64();
    let expected = [744.0, 70.7, 15.3, 5.16, 0.0537];
    let worst = g.eigenvalues.iter().zip(expected).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
    ensure(
        worst < 0.05 && secs < 30.0,
        format!("eigenvalues {:?}, max rel dev {worst:.2e}, {secs:.2} s", g.eigenvalues.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>()),
    )
}

fn c7(ctl: &TicTocControl) -> Check {
    let open = monodromy(&ctl.model, None).map_err(e)?;
    let closed = monodromy(&ctl.model, Some(&ctl.gains)).map_err(e)?;
    let mags: Vec<String> = closed.multipliers.iter().map(|m| format!("{:.3e}", m.abs())).collect();
    ensure(
        closed.spectral_radius < 0.05 && open.spectral_radius >= 1.0,
        format!("closed-loop |λ| {mags:?}, open-loop spectral radius {:.4}", open.spectral_radius),
    )
}

fn c8(ctl: &TicTocControl) -> Check {
    let x0 = PhaseState::from_slices(&[0.1, -0.5, 0.0], &[0.0; 3]).map_err(e)?;
    let clock = Instant::now();
    let res = run_closed_loop(&Pvtol, &TicTocChart::default(), Some(&ctl.gains), &x0, &SimOptions::default())
        .map_err(e)?;
    let secs = clock.elapsed().as_secs_f64();
    let fin = res.final_orbit_error();
    let bound = res.max_signal();
    ensure(
        fin.is_some_and(|v| v < 1e-3) && res.diverged.is_none() && bound < 100.0 && secs < 10.0,
        format!("final ‖ρ‖ = {fin:?} at t = 6π, max |signal| = {bound:.3}, {secs:.2} s"),
    )
}

fn c9() -> Check {
    let cert = certify_no_regular_vhc(&Pvtol, &PeriodicTrajectory::tic_toc(1000)).map_err(e)?;
    let times: Vec<f64> = cert.singular_times.iter().map(|r| r.t_s).collect();
    let ok_times = times.len() == 2 && times[0].abs() < 1e-8 && (times[1] - PI).abs() < 1e-8;
    let ok_vals = cert
        .singular_times
        .iter()
        .all(|r| (r.gravity_distance - 1.0).abs() < 1e-12 && (r.velocity_norm - 5f64.sqrt()).abs() < 1e-12);
    ensure(
        cert.is_positive() && ok_times && ok_vals,
        format!("verdict {:?}, singular times {times:?}", cert.verdict),
    )
}

fn c10() -> Check {
    let traj = PeriodicTrajectory::tic_toc(1000);
    let start = traj.samples[0].phase_state();
    let closed = accessibility_det(&Pvtol, &start, AccessibilityMethod::ClosedForm).map_err(e)?;
    let numeric = accessibility_det(&Pvtol, &start, AccessibilityMethod::NumericBracket).map_err(e)?;
    let rel = ((numeric - closed) / closed).abs();
    let zeros = accessibility_zeros(&Pvtol, &traj, AccessibilityMethod::ClosedForm).map_err(e)?;
    // ±π/2 on the period [0, 2π) are π/2 and 3π/2.
    let ok_zeros = zeros.len() == 2 && (zeros[0] - FRAC_PI_2).abs() < 1e-6 && (zeros[1] - 3.0 * FRAC_PI_2).abs() < 1e-6;
    ensure(
        (closed + 12.0).abs() < 1e-9 && rel < 1e-4 && ok_zeros,
        format!("closed form {closed:.12}, numeric rel dev {rel:.2e}, zeros {zeros:?}"),
    )
}

fn c11() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for psi_s in [FRAC_PI_4, FRAC_PI_2] {
        let Some(p) = find_family_parameters(psi_s).map_err(e)? else {
            ok = false;
            parts.push(format!("ψ_s = {psi_s:.4}: no parameters"));
            continue;
        };
        let q_s = DVector::from_column_slice(&[0.0, 0.0, psi_s]);
        let model = family_model(&q_s, &p).map_err(e)?;
        let report = check_theorem1(&model, 2048).map_err(e)?;
        let (periodic, traj) =
            plan_periodic(&model, &report, -0.8 * p.theta_max, 0.8 * p.theta_max, 1000).map_err(e)?;
        let t1 = periodic.base.start.t;
        let (a, b) = (periodic.eval(t1).map_err(e)?, periodic.eval(t1 + periodic.period).map_err(e)?);
        let closure = (a.0 - b.0).abs().max((a.1 - b.1).abs());
        // The mirrored extension closes (θ, θ̇) by construction; the lifted state is the real test.
        let lifted = traj.closure_error().map_err(e)?;
        let min_eig = gramian(&orthogonal_linearization(&Pvtol, &traj, 512).map_err(e)?).map_err(e)?.min_eigenvalue();
        ok &= closure < 1e-6 && lifted < 1e-6 && min_eig > 1e-6;
        parts.push(format!(
            "ψ_s = {psi_s:.4}: (k1,k2,k3,θmax) = ({}, {}, {}, {}), closure (θ, θ̇) {closure:.1e}, (q, q̇) {lifted:.1e}, min Gramian eig {min_eig:.3e}",
            p.k1, p.k2, p.k3, p.theta_max
        ));
    }
    ensure(ok, parts.join("; "))
}

fn c12(ctl: &TicTocControl) -> Check {
    let mut notes = Vec::new();
    let mut ok = true;

    // Time reversal: the tic-toc reduced dynamics are odd in θ, so boundary data
    // (−2, 1) give θ(t) = −θ̃(−t) with θ̃ the solution for (−1, 2).
    let m = ReducedModel::tic_toc((-2.5, 2.5));
    let r = check_theorem1(&m, 2048).map_err(e)?;
    let fwd = solve_boundary(&m, &r, -1.0, 0.0, 2.0, 0.0).map_err(e)?;
    let mirrored = solve_boundary(&m, &r, -2.0, 0.0, 1.0, 0.0).map_err(e)?;
    let rev = fwd.reversed();
    let mut wr: f64 = 0.0;
    for k in 0..=500 {
        let t = mirrored.start.t + mirrored.duration() * k as f64 / 500.0;
        let t_rev = rev.start.t + (t - mirrored.start.t);
        wr = wr.max((mirrored.eval(t).map_err(e)?.0 + rev.eval(t_rev.min(rev.end.t)).map_err(e)?.0).abs());
    }
    ok &= wr < 1e-6;
    notes.push(format!("time reversal {wr:.1e}"));

    // Gramian symmetry and positive semidefiniteness at several start phases.
    let mut asym: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for start in [0.0, 1.0, -2.0] {
        let g = gramian_from(&ctl.model, start).map_err(e)?;
        asym = asym.max(g.asymmetry);
        min_eig = min_eig.min(g.min_eigenvalue());
    }
    ok &= asym < 1e-8 && min_eig > 0.0;
    notes.push(format!("Gramian asymmetry {asym:.1e}, min eig {min_eig:.3e}"));

    // Cocycle Φ(t₂, t₀) = Φ(t₂, t₁) Φ(t₁, t₀) for the closed loop.
    let (t0, t1, t2) = (-1.0, 0.7, 2.9);
    let direct = transition(&ctl.model, Some(&ctl.gains), t0, t2).map_err(e)?;
    let composed = transition(&ctl.model, Some(&ctl.gains), t1, t2).map_err(e)?
        * transition(&ctl.model, Some(&ctl.gains), t0, t1).map_err(e)?;
    let cocycle = (&direct - &composed).amax() / direct.amax();
    ok &= cocycle < 1e-8;
    notes.push(format!("cocycle {cocycle:.1e}"));

    // Chart round trip.
    let chart = TicTocChart::default();
    let mut rt: f64 = 0.0;
    for (k, tau) in [-3.0, -1.2, 0.0, 0.4, 2.5].into_iter().enumerate() {
        let rho = DVector::from_fn(5, |i, _| 0.05 * ((i + k) as f64 * 1.7).sin());
        let x = chart_invert(&chart, tau, &rho).map_err(e)?;
        let (t, r) = chart.coordinates(&x).map_err(e)?;
        rt = rt.max((t - tau).abs()).max((r - &rho).amax());
    }
    ok &= rt <= 1e-10;
    notes.push(format!("chart round trip {rt:.1e}"));

    // Simulation determinism.
    let x0 = PhaseState::from_slices(&[0.05, -0.1, 1.4], &[0.9, 0.0, 0.1]).map_err(e)?;
    let opts = SimOptions { horizon: 2.0, ..SimOptions::default() };
    let a = run_closed_loop(&Pvtol, &chart, Some(&ctl.gains), &x0, &opts).map_err(e)?;
    let b = run_closed_loop(&Pvtol, &chart, Some(&ctl.gains), &x0, &opts).map_err(e)?;
    let same = a == b;
    ok &= same;
    notes.push(format!("simulation reproducible: {same}"));

    ensure(ok, notes.join(", "))
}

fn main() {
    let clock = Instant::now();
    let ctl = tic_toc_control();
    let mut results: Vec<(usize, Check)> = vec![(1, c1()), (2, c2()), (3, c3()), (4, c4()), (5, c5())];
    match &ctl {
        Ok(ctl) => {
            results.push((6, c6(ctl)));
            results.push((7, c7(ctl)));
            results.push((8, c8(ctl)));
        }
        Err(msg) => {
            for k in 6..=8 {
                results.push((k, Err(format!("transverse model unavailable: {msg}"))));
            }
        }
    }
    results.push((9, c9()));
    results.push((10, c10()));
    results.push((11, c11()));
    results.push((12, ctl.as_ref().map_err(|m| m.clone()).and_then(c12)));

    let mut failed = 0;
    for (k, r) in &results {
        match r {
            Ok(d) => println!("criterion {k:>2}: PASS  {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {k:>2}: FAIL  {d}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1} s)",
        results.len() - failed,
        clock.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
