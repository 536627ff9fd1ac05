//! Explicit Runge–Kutta integrators.
//!
//! [`dopri5`] is an adaptive Dormand–Prince 5(4) scheme with optional zero-crossing
//! event location; [`rk4_step`] is the classic fixed-step fourth-order step used by
//! the closed-loop simulator.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            max_step: f64::INFINITY,
            initial_step: None,
            max_steps: 2_000_000,
        }
    }
}

impl AdaptiveOptions {
    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }
}

/// Returned by the step observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    /// The event function crossed zero; `t`/`y` sit on the crossing.
    pub event: bool,
    /// The observer asked to stop.
    pub stopped: bool,
    pub steps: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Stepper<F> {
    rhs: F,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl<F> Stepper<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn new(rhs: F, dim: usize) -> Self {
        Self {
            rhs,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
        }
    }

    /// One Dormand–Prince step of size `h` from `(t, y)` with `k[0] = f(t, y)` already
    /// filled. Writes the fifth-order solution to `out` and returns the error estimate
    /// vector in `err`.
    fn step(&mut self, t: f64, y: &[f64], h: f64, out: &mut [f64], err: &mut [f64]) {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        (self.rhs)(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        (self.rhs)(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        (self.rhs)(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        (self.rhs)(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        (self.rhs)(t + h, tmp, k6);
        for i in 0..n {
            out[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        (self.rhs)(t + h, out, k7);
        for i in 0..n {
            err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &AdaptiveOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// Integrates `y' = rhs(t, y)` from `t0` towards `t_end` (either direction).
///
/// `observer` sees the initial point and every accepted step. When `event` is given,
/// integration stops at the first sign change of `event(t, y)`, located by re-stepping
/// from the last accepted point with a regula-falsi search on the step size.
pub fn dopri5<F>(
    rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &AdaptiveOptions,
    event: Option<&dyn Fn(f64, &[f64]) -> f64>,
    observer: &mut dyn FnMut(f64, &[f64]) -> Control,
) -> Result<Outcome>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let dim = y0.len();
    if y0.iter().any(|v| !v.is_finite()) || !t0.is_finite() || !t_end.is_finite() {
        return Err(Error::NonFinite("integrator initial state"));
    }
    let mut t = t0;
    let mut y = y0.to_vec();
    if observer(t, &y) == Control::Stop {
        return Ok(Outcome { t, y, event: false, stopped: true, steps: 0 });
    }
    let span = t_end - t0;
    if span == 0.0 {
        return Ok(Outcome { t, y, event: false, stopped: false, steps: 0 });
    }
    let dir = span.signum();
    let mut stepper = Stepper::new(rhs, dim);
    (stepper.rhs)(t, &y, &mut stepper.k[0]);

    let mut h = opts
        .initial_step
        .unwrap_or_else(|| (1e-3 * span.abs()).min(opts.max_step).max(1e-8))
        .min(opts.max_step);
    let mut y_new = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut g_prev = event.map(|g| g(t, &y));
    let mut steps = 0usize;

    loop {
        if steps >= opts.max_steps {
            return Err(Error::Integration(format!(
                "step budget of {} exhausted at t = {t}",
                opts.max_steps
            )));
        }
        let remaining = (t_end - t) * dir;
        if remaining <= 1e-14 * t_end.abs().max(1.0) {
            return Ok(Outcome { t: t_end, y, event: false, stopped: false, steps });
        }
        let last = h >= remaining;
        let h_try = if last { remaining } else { h };
        stepper.step(t, &y, dir * h_try, &mut y_new, &mut err);
        steps += 1;
        let e = error_norm(&err, &y, &y_new, opts);
        if !e.is_finite() {
            h *= 0.25;
            if h < 1e-15 * t.abs().max(1.0) {
                return Err(Error::Integration(format!("non-finite derivative near t = {t}")));
            }
            continue;
        }
        if e > 1.0 {
            h = h_try * (0.9 * e.powf(-0.2)).clamp(0.2, 1.0);
            if h < 1e-15 * t.abs().max(1.0) {
                return Err(Error::Integration(format!("step size underflow at t = {t}")));
            }
            continue;
        }
        let t_new = if last { t_end } else { t + dir * h_try };

        if let (Some(g), Some(g0)) = (event, g_prev) {
            let g1 = g(t_new, &y_new);
            if g0 != 0.0 && (g1 == 0.0 || g0.signum() != g1.signum()) {
                let (te, ye) = locate_event(&mut stepper, g, t, &y, dir * h_try, g0, g1);
                observer(te, &ye);
                return Ok(Outcome { t: te, y: ye, event: true, stopped: false, steps });
            }
            g_prev = Some(g1);
        }

        t = t_new;
        std::mem::swap(&mut y, &mut y_new);
        let (a, b) = stepper.k.split_at_mut(1);
        a[0].copy_from_slice(&b[5]);
        if observer(t, &y) == Control::Stop {
            return Ok(Outcome { t, y, event: false, stopped: true, steps });
        }
        if last {
            return Ok(Outcome { t, y, event: false, stopped: false, steps });
        }
        let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h_try * fac).min(opts.max_step);
    }
}

fn locate_event<F>(
    stepper: &mut Stepper<F>,
    g: &dyn Fn(f64, &[f64]) -> f64,
    t: f64,
    y: &[f64],
    h_full: f64,
    g0: f64,
    g1: f64,
) -> (f64, Vec<f64>)
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let dim = y.len();
    let mut out = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let k0 = stepper.k[0].clone();
    let mut eval = |hs: f64, out: &mut Vec<f64>, err: &mut Vec<f64>| -> f64 {
        stepper.k[0].copy_from_slice(&k0);
        stepper.step(t, y, hs, out, err);
        g(t + hs, out)
    };
    if g1 == 0.0 {
        eval(h_full, &mut out, &mut err);
        return (t + h_full, out);
    }
    // Illinois regula falsi on the step fraction s in [0, 1].
    let (mut a, mut fa, mut b, mut fb) = (0.0f64, g0, 1.0f64, g1);
    let mut side = 0i8;
    let mut best = (1.0, f64::INFINITY);
    for _ in 0..100 {
        let s = (a * fb - b * fa) / (fb - fa);
        let s = if s.is_finite() && s > a && s < b { s } else { 0.5 * (a + b) };
        let fs = eval(s * h_full, &mut out, &mut err);
        if fs.abs() < best.1 {
            best = (s, fs.abs());
        }
        if fs == 0.0 || (b - a) < 1e-15 || fs.abs() < 1e-15 {
            break;
        }
        if fs.signum() == fb.signum() {
            b = s;
            fb = fs;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = s;
            fa = fs;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    eval(best.0 * h_full, &mut out, &mut err);
    (t + best.0 * h_full, out)
}

/// Classic fourth-order Runge–Kutta step.
pub fn rk4_step<F>(rhs: &F, t: f64, y: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let k1 = rhs(t, y);
    let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
    let k2 = rhs(t + 0.5 * h, &y2);
    let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
    let k3 = rhs(t + 0.5 * h, &y3);
    let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
    let k4 = rhs(t + h, &y4);
    y.iter()
        .enumerate()
        .map(|(i, a)| a + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}
