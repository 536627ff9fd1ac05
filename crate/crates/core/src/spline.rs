//! Periodic cubic splines on a uniform grid, used to evaluate sampled periodic
//! matrix functions (linearizations, gains) between grid nodes.

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    t0: f64,
    period: f64,
    n: usize,
    dim: usize,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl PeriodicSpline {
    /// `samples[k]` is the value at `t0 + k * period / n`; the sample at `t0 + period`
    /// is implied by periodicity.
    pub fn new(t0: f64, period: f64, samples: &[Vec<f64>]) -> Self {
        let n = samples.len();
        assert!(n >= 3, "periodic spline needs at least three nodes");
        let dim = samples[0].len();
        let h = period / n as f64;
        let mut values = vec![0.0; n * dim];
        for (k, s) in samples.iter().enumerate() {
            assert_eq!(s.len(), dim);
            values[k * dim..(k + 1) * dim].copy_from_slice(s);
        }
        let mut second = vec![0.0; n * dim];
        let mut rhs = vec![0.0; n];
        for d in 0..dim {
            for k in 0..n {
                let prev = values[((k + n - 1) % n) * dim + d];
                let cur = values[k * dim + d];
                let next = values[((k + 1) % n) * dim + d];
                rhs[k] = 6.0 * (next - 2.0 * cur + prev) / (h * h);
            }
            let m = solve_cyclic_141(&rhs);
            for k in 0..n {
                second[k * dim + d] = m[k];
            }
        }
        Self { t0, period, n, dim, values, second }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let h = self.period / self.n as f64;
        let rel = (t - self.t0).rem_euclid(self.period);
        let mut i = (rel / h).floor() as usize;
        if i >= self.n {
            i = self.n - 1;
        }
        let s = rel - i as f64 * h;
        let j = (i + 1) % self.n;
        let b = s / h;
        let a = 1.0 - b;
        let ca = (a * a * a - a) * h * h / 6.0;
        let cb = (b * b * b - b) * h * h / 6.0;
        let (d, vi, vj) = (self.dim, i * self.dim, j * self.dim);
        for k in 0..d {
            out[k] = a * self.values[vi + k]
                + b * self.values[vj + k]
                + ca * self.second[vi + k]
                + cb * self.second[vj + k];
        }
    }
}

/// Solves the cyclic system `m[k-1] + 4 m[k] + m[k+1] = r[k]`.
fn solve_cyclic_141(r: &[f64]) -> Vec<f64> {
    let n = r.len();
    // Sherman–Morrison on the cyclic tridiagonal matrix with unit corners.
    let (alpha, beta) = (1.0, 1.0);
    let gamma = -4.0;
    let mut diag = vec![4.0; n];
    diag[0] -= gamma;
    diag[n - 1] -= alpha * beta / gamma;
    let x = solve_tridiag(&diag, r);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiag(&diag, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

/// Thomas algorithm with unit off-diagonals.
fn solve_tridiag(diag: &[f64], r: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = 1.0 / diag[0];
    d[0] = r[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - c[i - 1];
        c[i] = 1.0 / m;
        d[i] = (r[i] - d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// A periodic spline over matrices of a fixed shape (row-major flattening).
#[derive(Debug, Clone)]
pub struct MatrixSpline {
    rows: usize,
    cols: usize,
    spline: PeriodicSpline,
}

impl MatrixSpline {
    pub fn new(t0: f64, period: f64, samples: &[DMatrix<f64>]) -> Self {
        let (rows, cols) = samples[0].shape();
        let flat: Vec<Vec<f64>> = samples
            .iter()
            .map(|m| {
                let mut v = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    for j in 0..cols {
                        v.push(m[(i, j)]);
                    }
                }
                v
            })
            .collect();
        Self { rows, cols, spline: PeriodicSpline::new(t0, period, &flat) }
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.spline.eval(t))
    }
}
