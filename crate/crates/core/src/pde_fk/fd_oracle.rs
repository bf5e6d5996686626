//! Crank–Nicolson reference for one-dimensional problems
//! `d_t u + (sigma^2 / 2) u'' + b u' + c(t, x) u = 0`, `u(T) = h`, with
//! homogeneous Dirichlet conditions at `+-x_max`.

use crate::error::{domain, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdSpec {
    pub sigma: f64,
    pub drift: f64,
    pub horizon: f64,
    pub x_max: f64,
    /// Space points including both boundary nodes.
    pub nx: usize,
    pub nt: usize,
}

impl FdSpec {
    /// Truncation at `4 max|x| + 4 sqrt(T)` with 2000 points in space and time.
    pub fn for_points(max_abs_x: f64, horizon: f64, sigma: f64, drift: f64) -> Self {
        FdSpec { sigma, drift, horizon, x_max: 4.0 * max_abs_x + 4.0 * horizon.sqrt(), nx: 2000, nt: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdSolution {
    pub xs: Vec<f64>,
    /// `u(0, x)` at the nodes.
    pub u0: Vec<f64>,
}

impl FdSolution {
    /// Linear interpolation, zero outside the domain.
    pub fn at(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] || x >= self.xs[n - 1] {
            return 0.0;
        }
        let h = self.xs[1] - self.xs[0];
        let j = (((x - self.xs[0]) / h).floor() as usize).min(n - 2);
        let w = (x - self.xs[j]) / h;
        (1.0 - w) * self.u0[j] + w * self.u0[j + 1]
    }
}

pub fn fd_oracle(spec: &FdSpec, potential: &dyn Fn(f64, f64) -> f64, terminal: &dyn Fn(f64) -> f64) -> Result<FdSolution> {
    if spec.nx < 5 || spec.nt < 1 || !(spec.x_max > 0.0) || !(spec.horizon > 0.0) {
        return domain("finite-difference grid is too small");
    }
    let n = spec.nx;
    let h = 2.0 * spec.x_max / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|j| -spec.x_max + h * j as f64).collect();
    let mut u: Vec<f64> = xs.iter().map(|x| terminal(*x)).collect();
    u[0] = 0.0;
    u[n - 1] = 0.0;
    let dt = spec.horizon / spec.nt as f64;
    let diff = 0.5 * spec.sigma * spec.sigma / (h * h);
    let adv = spec.drift / (2.0 * h);
    let m = n - 2;
    let (mut lo, mut di, mut up, mut rhs) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for k in 0..spec.nt {
        // Backward in t from T, potential at the midpoint of the step.
        let t_mid = spec.horizon - (k as f64 + 0.5) * dt;
        for i in 0..m {
            let j = i + 1;
            let c = potential(t_mid, xs[j]);
            let (a_l, a_d, a_u) = (diff - adv, -2.0 * diff + c, diff + adv);
            rhs[i] = u[j] + 0.5 * dt * (a_l * u[j - 1] + a_d * u[j] + a_u * u[j + 1]);
            lo[i] = -0.5 * dt * a_l;
            di[i] = 1.0 - 0.5 * dt * a_d;
            up[i] = -0.5 * dt * a_u;
        }
        thomas(&lo, &di, &up, &mut rhs);
        u[1..n - 1].copy_from_slice(&rhs);
    }
    Ok(FdSolution { xs, u0: u })
}

/// Solves a tridiagonal system in place (`rhs` becomes the solution).
fn thomas(lo: &[f64], di: &[f64], up: &[f64], rhs: &mut [f64]) {
    let m = di.len();
    let mut c = vec![0.0; m];
    let mut beta = di[0];
    c[0] = up[0] / beta;
    rhs[0] /= beta;
    for i in 1..m {
        beta = di[i] - lo[i] * c[i - 1];
        c[i] = up[i] / beta;
        rhs[i] = (rhs[i] - lo[i] * rhs[i - 1]) / beta;
    }
    for i in (0..m - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}
