//! Residual of the weak formulation
//! `int u(t) phi = int u_T phi + int_t^T int u L*phi + int_t^T int g(u) phi eta(dr, x)`
//! for one-dimensional tables.

use std::sync::Arc;

use crate::drivers::{bump, SpaceTimeDriver};
use crate::error::{domain, Result};

use super::PdeSolutionTable;

/// `u` on a rectangular `(t, x)` grid, `values[i * xs.len() + j] = u(t_i, x_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct UGrid {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl UGrid {
    pub fn new(times: Vec<f64>, xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let inc = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if times.len() < 2 || xs.len() < 3 || !inc(&times) || !inc(&xs) {
            return domain("table axes need increasing times (>= 2) and space nodes (>= 3)");
        }
        if values.len() != times.len() * xs.len() {
            return domain("table values do not match its axes");
        }
        Ok(UGrid { times, xs, values })
    }

    pub fn from_fn(times: Vec<f64>, xs: Vec<f64>, u: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = times.iter().flat_map(|t| xs.iter().map(|x| u(*t, *x)).collect::<Vec<_>>()).collect();
        Self::new(times, xs, values)
    }

    /// Rebuilds the grid from a one-dimensional solution table whose rows
    /// cover a full product of times and points, in any order.
    pub fn from_table(table: &PdeSolutionTable) -> Result<Self> {
        if table.rows.iter().any(|r| r.x.len() != 1) {
            return domain("weak residuals are implemented for one space dimension");
        }
        let mut times: Vec<f64> = table.rows.iter().map(|r| r.t).collect();
        let mut xs: Vec<f64> = table.rows.iter().map(|r| r.x[0]).collect();
        for v in [&mut times, &mut xs] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mut values = vec![f64::NAN; times.len() * xs.len()];
        for r in &table.rows {
            let i = times.partition_point(|t| *t < r.t);
            let j = xs.partition_point(|x| *x < r.x[0]);
            values[i * xs.len() + j] = r.u;
        }
        if values.iter().any(|v| v.is_nan()) {
            return domain("solution table is not a full time-space product");
        }
        Self::new(times, xs, values)
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.xs.len()..(i + 1) * self.xs.len()]
    }

    /// Bilinear interpolation, clamped to the grid.
    pub fn at(&self, t: f64, x: f64) -> f64 {
        let (i, a) = locate(&self.times, t);
        let (j, b) = locate(&self.xs, x);
        let n = self.xs.len();
        let v = |ii: usize, jj: usize| self.values[ii * n + jj];
        (1.0 - a) * ((1.0 - b) * v(i, j) + b * v(i, j + 1)) + a * ((1.0 - b) * v(i + 1, j) + b * v(i + 1, j + 1))
    }
}

fn locate(axis: &[f64], v: f64) -> (usize, f64) {
    let k = axis.partition_point(|a| *a <= v).clamp(1, axis.len() - 1) - 1;
    let w = ((v - axis[k]) / (axis[k + 1] - axis[k])).clamp(0.0, 1.0);
    (k, w)
}

type Real = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A smooth test function supported in `[support.0, support.1]`.
#[derive(Clone)]
pub struct TestFunction {
    pub phi: Real,
    pub d1: Option<Real>,
    pub d2: Option<Real>,
    pub support: (f64, f64),
}

impl TestFunction {
    /// Derivatives by fourth-order central differences.
    pub fn new(phi: Real, support: (f64, f64)) -> Self {
        TestFunction { phi, d1: None, d2: None, support }
    }

    pub fn with_derivatives(mut self, d1: Real, d2: Real) -> Self {
        self.d1 = Some(d1);
        self.d2 = Some(d2);
        self
    }

    /// `bump((x - c) / r)` on `[c - r, c + r]`.
    pub fn bump(center: f64, radius: f64) -> Self {
        Self::new(Arc::new(move |x| bump((x - center) / radius)), (center - radius, center + radius))
    }

    const H: f64 = 1e-3;

    fn first(&self, x: f64) -> f64 {
        match &self.d1 {
            Some(d) => d(x),
            None => {
                let (h, p) = (Self::H, &self.phi);
                (-p(x + 2.0 * h) + 8.0 * p(x + h) - 8.0 * p(x - h) + p(x - 2.0 * h)) / (12.0 * h)
            }
        }
    }

    fn second(&self, x: f64) -> f64 {
        match &self.d2 {
            Some(d) => d(x),
            None => {
                let (h, p) = (Self::H, &self.phi);
                (-p(x + 2.0 * h) + 16.0 * p(x + h) - 30.0 * p(x) + 16.0 * p(x - h) - p(x - 2.0 * h)) / (12.0 * h * h)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakResidual {
    /// Left side minus right side.
    pub residual: f64,
    /// Sum of the absolute values of the four terms.
    pub scale: f64,
    /// `lambda + 4 tau > 4` for the declared driver regularity.
    pub within_hypotheses: bool,
}

impl WeakResidual {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.residual.abs() / self.scale
        } else {
            0.0
        }
    }
}

fn trapezoid(xs: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    xs.windows(2).enumerate().map(|(j, w)| 0.5 * (w[1] - w[0]) * (f(j) + f(j + 1))).sum()
}

/// Residual at table time `t` for the generator `(sigma^2 / 2) d_xx + b d_x`.
/// The time integral of the Young term is a left-point sum over the table's
/// times at each space node, and space integrals use the trapezoid rule on
/// the table's nodes.
#[allow(clippy::too_many_arguments)]
pub fn weak_solution_residual(
    u: &UGrid,
    phi: &TestFunction,
    sigma: f64,
    drift: f64,
    driver: &SpaceTimeDriver,
    g: &dyn Fn(f64) -> f64,
    terminal: &dyn Fn(f64) -> f64,
    t: f64,
) -> Result<WeakResidual> {
    let (lo, hi) = phi.support;
    let (x0, x1) = (u.xs[0], u.xs[u.xs.len() - 1]);
    if !(lo < hi) || lo < x0 || hi > x1 {
        return domain(format!("test function support [{lo}, {hi}] is not inside the table range [{x0}, {x1}]"));
    }
    let start = match u.times.iter().position(|s| (s - t).abs() <= 1e-12 * (1.0 + t.abs())) {
        Some(k) => k,
        None => return domain(format!("time {t} is not a node of the table")),
    };
    let pv: Vec<f64> = u.xs.iter().map(|x| (phi.phi)(*x)).collect();
    if pv.iter().all(|v| *v == 0.0) {
        return domain("test function vanishes on the table nodes");
    }
    let adj: Vec<f64> = u.xs.iter().map(|x| 0.5 * sigma * sigma * phi.second(*x) - drift * phi.first(*x)).collect();
    let nt = u.times.len();
    let lhs = trapezoid(&u.xs, |j| u.row(start)[j] * pv[j]);
    let term = trapezoid(&u.xs, |j| terminal(u.xs[j]) * pv[j]);
    let gen_at = |i: usize| trapezoid(&u.xs, |j| u.row(i)[j] * adj[j]);
    let generator: f64 = (start..nt - 1).map(|i| 0.5 * (u.times[i + 1] - u.times[i]) * (gen_at(i) + gen_at(i + 1))).sum();
    let young: f64 = (start..nt - 1)
        .map(|i| {
            let (a, b) = (u.times[i], u.times[i + 1]);
            trapezoid(&u.xs, |j| g(u.row(i)[j]) * pv[j] * driver.increment1(a, b, &[u.xs[j]]))
        })
        .sum();
    let reg = driver.regularity();
    Ok(WeakResidual {
        residual: lhs - term - generator - young,
        scale: lhs.abs() + term.abs() + generator.abs() + young.abs(),
        within_hypotheses: reg.lambda + 4.0 * reg.tau > 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::DiffusionSpec;
    use crate::drivers::Regularity;
    use crate::pde_fk::{solve_linear_young_pde, FkConfig};

    fn axis(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
    }

    /// `u(t, x) = e^{c(1-t)} / sqrt(1 + 2s) exp(-x^2 / (1 + 2s))`, `s = 1 - t`,
    /// solves the heat equation with potential `c` and `u(1) = e^{-x^2}`.
    fn heat(c: f64) -> impl Fn(f64, f64) -> f64 {
        move |t, x| {
            let s = 1.0 - t;
            (c * s).exp() / (1.0 + 2.0 * s).sqrt() * (-x * x / (1.0 + 2.0 * s)).exp()
        }
    }

    #[test]
    fn exact_heat_solution_has_small_residual() {
        let u = UGrid::from_fn(axis(0.0, 1.0, 200), axis(-5.0, 5.0, 400), heat(0.0)).unwrap();
        let phi = TestFunction::bump(0.3, 1.5);
        let zero = SpaceTimeDriver::zero(1, 1.0);
        for t in [0.0, 0.5] {
            let r = weak_solution_residual(&u, &phi, 1.0, 0.0, &zero, &|v| v, &|x| (-x * x).exp(), t).unwrap();
            assert!(r.residual.abs() < 1e-4, "{r:?}");
            assert!(r.within_hypotheses);
        }
        let r = weak_solution_residual(&u, &phi, 1.0, 0.0, &zero, &|v| v, &|x| (-x * x).exp(), 1.0).unwrap();
        assert!(r.residual.abs() < 1e-14);
    }

    #[test]
    fn young_term_balances_potential() {
        let c = 0.7;
        let u = UGrid::from_fn(axis(0.0, 1.0, 400), axis(-5.0, 5.0, 400), heat(c)).unwrap();
        let eta = SpaceTimeDriver::time_only(Arc::new(move |t| c * t), true, 1.0);
        let phi = TestFunction::bump(0.0, 2.0);
        let r = weak_solution_residual(&u, &phi, 1.0, 0.0, &eta, &|v| v, &|x| (-x * x).exp(), 0.0).unwrap();
        assert!(r.relative() < 1e-3, "{r:?}");
        // Dropping the Young term leaves an O(1) defect.
        let r0 = weak_solution_residual(&u, &phi, 1.0, 0.0, &SpaceTimeDriver::zero(1, 1.0), &|v| v, &|x| (-x * x).exp(), 0.0).unwrap();
        assert!(r0.relative() > 0.05);
    }

    #[test]
    fn analytic_and_numerical_derivatives_agree() {
        let u = UGrid::from_fn(axis(0.0, 1.0, 50), axis(-4.0, 4.0, 200), heat(0.0)).unwrap();
        let sd = |x: f64| (-x * x).exp();
        let fd = TestFunction::new(Arc::new(sd), (-4.0, 4.0));
        let an = fd.clone().with_derivatives(Arc::new(|x| -2.0 * x * (-x * x).exp()), Arc::new(|x| (4.0 * x * x - 2.0) * (-x * x).exp()));
        let zero = SpaceTimeDriver::zero(1, 1.0);
        let a = weak_solution_residual(&u, &an, 1.0, 0.3, &zero, &|v| v, &|x| (-x * x).exp(), 0.0).unwrap();
        let b = weak_solution_residual(&u, &fd, 1.0, 0.3, &zero, &|v| v, &|x| (-x * x).exp(), 0.0).unwrap();
        assert!((a.residual - b.residual).abs() < 1e-7);
    }

    #[test]
    fn monte_carlo_table() {
        let times = axis(0.0, 0.8, 4);
        let xs = axis(-4.0, 4.0, 32);
        let pts: Vec<(f64, Vec<f64>)> = times.iter().flat_map(|t| xs.iter().map(move |x| (*t, vec![*x]))).collect();
        let zero = SpaceTimeDriver::zero(1, 1.0);
        let h = |x: &[f64]| (-x[0] * x[0]).exp();
        let mc = solve_linear_young_pde(&h, &DiffusionSpec::brownian(1), &zero, &pts, &FkConfig { samples: 20_000, steps: 20, seed: 5 }).unwrap();
        let mut grid = UGrid::from_table(&mc).unwrap();
        grid.times.push(1.0);
        grid.values.extend(xs.iter().map(|x| (-x * x).exp()));
        let phi = TestFunction::bump(0.0, 2.0);
        let r = weak_solution_residual(&grid, &phi, 1.0, 0.0, &zero, &|v| v, &|x| (-x * x).exp(), 0.0).unwrap();
        // Coarse time trapezoid plus Monte Carlo noise.
        assert!(r.relative() < 0.02, "{r:?}");
    }

    #[test]
    fn rejections_and_labels() {
        let u = UGrid::from_fn(axis(0.0, 1.0, 10), axis(-2.0, 2.0, 40), heat(0.0)).unwrap();
        let zero = SpaceTimeDriver::zero(1, 1.0);
        let h = |x: f64| (-x * x).exp();
        let nil = TestFunction::new(Arc::new(|_| 0.0), (-1.0, 1.0));
        assert!(weak_solution_residual(&u, &nil, 1.0, 0.0, &zero, &|v| v, &h, 0.0).is_err());
        let wide = TestFunction::bump(0.0, 3.0);
        assert!(weak_solution_residual(&u, &wide, 1.0, 0.0, &zero, &|v| v, &h, 0.0).is_err());
        let ok = TestFunction::bump(0.0, 1.0);
        assert!(weak_solution_residual(&u, &ok, 1.0, 0.0, &zero, &|v| v, &h, 0.05).is_err());
        let rough = SpaceTimeDriver::time_only(Arc::new(|t| t), false, 1.0).with_regularity(Regularity::new(0.8, 0.5, 0.0).unwrap());
        let r = weak_solution_residual(&u, &ok, 1.0, 0.0, &rough, &|v| v, &h, 0.0).unwrap();
        assert!(!r.within_hypotheses);
        assert!((u.at(0.05, 0.1) - heat(0.0)(0.05, 0.1)).abs() < 1e-2);
    }
}
