//! Nonlinear Young integrals `int y_r eta(dr, x_r)` and matrix Young flows
//! `Gamma^t_s = I + sum_i int (alpha^i_r)^T Gamma^t_r eta_i(dr, X_r)`.

use nalgebra::DMatrix;

use crate::drivers::SpaceTimeDriver;
use crate::error::{domain, Error, Result};
use crate::paths::{SamplePath, TimeGrid};

/// Where the space argument of each driver increment is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SpaceEval {
    /// `eta(t_{i+1}, x_{t_i}) - eta(t_i, x_{t_i})`.
    #[default]
    Left,
    /// Experimental: the space point is the average of both endpoints.
    Midpoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YoungOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_levels: u32,
    pub space_eval: SpaceEval,
}

impl Default for YoungOptions {
    fn default() -> Self {
        YoungOptions { tol_abs: 1e-8, tol_rel: 1e-6, max_levels: 16, space_eval: SpaceEval::Left }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct YoungIntegralResult {
    /// One entry per driver channel.
    pub value: Vec<f64>,
    /// Number of partition levels evaluated (the base grid counts as one).
    pub levels: u32,
    /// Max-norm difference between the last two levels.
    pub cauchy_gap: f64,
    pub converged: bool,
    /// Max-norm gap after each refinement, for rate studies.
    pub gaps: Vec<f64>,
}

impl YoungIntegralResult {
    /// Sum over channels.
    pub fn total(&self) -> f64 {
        self.value.iter().sum()
    }
}

/// Base nodes inside `[a, b]`, with interpolated endpoints added when `a`
/// or `b` fall between grid points.
struct Window {
    times: Vec<f64>,
    y: Vec<f64>,
    x: Vec<f64>,
}

fn window(y: &SamplePath, x: &SamplePath, a: f64, b: f64) -> Result<Window> {
    if y.grid().times() != x.grid().times() {
        return domain("integrand and space path must share one time grid");
    }
    if !(b > a) {
        return domain(format!("integration interval [{a}, {b}] is empty"));
    }
    let ts = y.grid().times();
    let eps = 1e-12 * (1.0 + b.abs());
    if a < ts[0] - eps || b > ts[ts.len() - 1] + eps {
        return domain(format!("paths on [{}, {}] do not cover [{a}, {b}]", ts[0], ts[ts.len() - 1]));
    }
    let (dy, dx) = (y.dim(), x.dim());
    let mut w = Window { times: Vec::new(), y: Vec::new(), x: Vec::new() };
    let push = |t: f64, w: &mut Window| {
        let mut vy = vec![0.0; dy];
        let mut vx = vec![0.0; dx];
        y.interpolate(t, &mut vy);
        x.interpolate(t, &mut vx);
        w.times.push(t);
        w.y.extend(vy);
        w.x.extend(vx);
    };
    push(a, &mut w);
    for (i, &t) in ts.iter().enumerate() {
        if t > a + eps && t < b - eps {
            w.times.push(t);
            w.y.extend_from_slice(y.point(i));
            w.x.extend_from_slice(x.point(i));
        }
    }
    push(b, &mut w);
    Ok(w)
}

/// Riemann sum at refinement `level`, accumulating per base node into
/// `running` (length = base nodes x channels) when given.
fn level_sum(
    w: &Window,
    dy: usize,
    dx: usize,
    driver: &SpaceTimeDriver,
    level: u32,
    space_eval: SpaceEval,
    mut running: Option<&mut [f64]>,
) -> Vec<f64> {
    let m = driver.channels();
    let sub = 1usize << level;
    let mut total = vec![0.0; m];
    let mut inc = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut yl = vec![0.0; dy];
    let mut xl = vec![0.0; dx];
    let mut xr = vec![0.0; dx];
    let mut xe = vec![0.0; dx];
    if let Some(r) = running.as_deref_mut() {
        r[..m].iter_mut().for_each(|v| *v = 0.0);
    }
    for j in 0..w.times.len() - 1 {
        let (t0, t1) = (w.times[j], w.times[j + 1]);
        let (y0, y1) = (&w.y[j * dy..(j + 1) * dy], &w.y[(j + 1) * dy..(j + 2) * dy]);
        let (x0, x1) = (&w.x[j * dx..(j + 1) * dx], &w.x[(j + 1) * dx..(j + 2) * dx]);
        for l in 0..sub {
            let (u0, u1) = (l as f64 / sub as f64, (l + 1) as f64 / sub as f64);
            let (r0, r1) = (t0 + (t1 - t0) * u0, if l + 1 == sub { t1 } else { t0 + (t1 - t0) * u1 });
            for k in 0..dy {
                yl[k] = y0[k] + u0 * (y1[k] - y0[k]);
            }
            for k in 0..dx {
                xl[k] = x0[k] + u0 * (x1[k] - x0[k]);
            }
            let xs: &[f64] = match space_eval {
                SpaceEval::Left => &xl,
                SpaceEval::Midpoint => {
                    for k in 0..dx {
                        xr[k] = x0[k] + u1 * (x1[k] - x0[k]);
                        xe[k] = 0.5 * (xl[k] + xr[k]);
                    }
                    &xe
                }
            };
            driver.increment_into(r0, r1, xs, &mut inc, &mut scratch);
            for c in 0..m {
                total[c] += if dy == 1 { yl[0] } else { yl[c] } * inc[c];
            }
        }
        if let Some(r) = running.as_deref_mut() {
            r[(j + 1) * m..(j + 2) * m].copy_from_slice(&total);
        }
    }
    total
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

fn check_dims(y: &SamplePath, driver: &SpaceTimeDriver) -> Result<()> {
    if y.dim() != 1 && y.dim() != driver.channels() {
        return domain(format!(
            "integrand dimension {} must be 1 or the driver channel count {}",
            y.dim(),
            driver.channels()
        ));
    }
    Ok(())
}

/// Left-point Riemann sums `sum_i y_{t_i} (eta(t_{i+1}, x_{t_i}) - eta(t_i, x_{t_i}))`
/// over `[a, b]`, refined dyadically (linear interpolation of `y` and `x`)
/// until two successive levels agree to `tol_abs + tol_rel * |value|`.
///
/// A one-dimensional `y` multiplies every channel; otherwise channel `k`
/// uses `y_k`. Non-convergence is reported through `converged`.
pub fn nonlinear_young_integral(
    y: &SamplePath,
    x: &SamplePath,
    driver: &SpaceTimeDriver,
    a: f64,
    b: f64,
    opts: &YoungOptions,
) -> Result<YoungIntegralResult> {
    check_dims(y, driver)?;
    let w = window(y, x, a, b)?;
    let (value, levels, gaps, converged) = refine_until_converged(&w, y.dim(), x.dim(), driver, opts, None);
    let cauchy_gap = gaps.last().copied().unwrap_or(f64::INFINITY);
    Ok(YoungIntegralResult { value, levels, cauchy_gap, converged, gaps })
}

fn refine_until_converged(
    w: &Window,
    dy: usize,
    dx: usize,
    driver: &SpaceTimeDriver,
    opts: &YoungOptions,
    mut running: Option<&mut [f64]>,
) -> (Vec<f64>, u32, Vec<f64>, bool) {
    let mut prev = level_sum(w, dy, dx, driver, 0, opts.space_eval, running.as_deref_mut());
    let mut gaps = Vec::new();
    let mut converged = false;
    let mut level = 0;
    while level < opts.max_levels {
        level += 1;
        let next = level_sum(w, dy, dx, driver, level, opts.space_eval, running.as_deref_mut());
        let gap = max_gap(&next, &prev);
        gaps.push(gap);
        let scale = next.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prev = next;
        if gap <= opts.tol_abs + opts.tol_rel * scale {
            converged = true;
            break;
        }
    }
    (prev, level + 1, gaps, converged)
}

/// Running integral at every base node of `[a, b]`, taken from the
/// converged refinement level. Returns (node times, values per node and
/// channel, result at `b`).
pub fn cumulative_young_integral(
    y: &SamplePath,
    x: &SamplePath,
    driver: &SpaceTimeDriver,
    a: f64,
    b: f64,
    opts: &YoungOptions,
) -> Result<(Vec<f64>, Vec<f64>, YoungIntegralResult)> {
    check_dims(y, driver)?;
    let w = window(y, x, a, b)?;
    let mut running = vec![0.0; w.times.len() * driver.channels()];
    let (value, levels, gaps, converged) =
        refine_until_converged(&w, y.dim(), x.dim(), driver, opts, Some(&mut running));
    let cauchy_gap = gaps.last().copied().unwrap_or(f64::INFINITY);
    Ok((w.times, running, YoungIntegralResult { value, levels, cauchy_gap, converged, gaps }))
}

/// Left-point sum of `eta` increments along a sampled path with unit
/// integrand, summed over channels. `xs` is row-major with `dim` entries per
/// time. This is the hot kernel of the Monte Carlo solvers.
#[inline]
pub fn young_sum_along(driver: &SpaceTimeDriver, times: &[f64], xs: &[f64], dim: usize) -> f64 {
    let m = driver.channels();
    let mut acc = 0.0;
    if m == 1 {
        for i in 0..times.len() - 1 {
            acc += driver.increment1(times[i], times[i + 1], &xs[i * dim..(i + 1) * dim]);
        }
    } else {
        let mut inc = vec![0.0; m];
        let mut scratch = vec![0.0; m];
        for i in 0..times.len() - 1 {
            driver.increment_into(times[i], times[i + 1], &xs[i * dim..(i + 1) * dim], &mut inc, &mut scratch);
            acc += inc.iter().sum::<f64>();
        }
    }
    acc
}

/// Per-time coefficient matrices `alpha^k_{t_i}` (`n x n`, `channels` of them).
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixPath {
    grid: TimeGrid,
    n: usize,
    channels: usize,
    data: Vec<DMatrix<f64>>,
}

impl MatrixPath {
    pub fn from_fn(
        grid: TimeGrid,
        n: usize,
        channels: usize,
        f: impl Fn(usize, f64, usize) -> DMatrix<f64>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.len() * channels);
        for (i, &t) in grid.times().iter().enumerate() {
            for k in 0..channels {
                let m = f(i, t, k);
                if m.nrows() != n || m.ncols() != n {
                    return domain(format!("coefficient at index {i} is not {n}x{n}"));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return domain(format!("coefficient at index {i} is not finite"));
                }
                data.push(m);
            }
        }
        Ok(MatrixPath { grid, n, channels, data })
    }

    pub fn constant(grid: TimeGrid, per_channel: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = per_channel.first().map(|m| m.nrows()).unwrap_or(0);
        let channels = per_channel.len();
        Self::from_fn(grid, n, channels, |_, _, k| per_channel[k].clone())
    }

    /// Scalar coefficients (`n = 1`) from a scalar path with one entry per channel.
    pub fn from_scalar_path(path: &SamplePath) -> Result<Self> {
        let ch = path.dim();
        Self::from_fn(path.grid().clone(), 1, ch, |i, _, k| DMatrix::from_element(1, 1, path.point(i)[k]))
    }

    pub fn at(&self, i: usize, k: usize) -> &DMatrix<f64> {
        &self.data[i * self.channels + k]
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Midpoint refinement with linearly interpolated coefficients.
    fn refine(&self) -> MatrixPath {
        let grid = self.grid.refine();
        let old = self.grid.len();
        let mut data = Vec::with_capacity(grid.len() * self.channels);
        for i in 0..old {
            for k in 0..self.channels {
                data.push(self.at(i, k).clone());
            }
            if i + 1 < old {
                for k in 0..self.channels {
                    data.push((self.at(i, k) + self.at(i + 1, k)) * 0.5);
                }
            }
        }
        MatrixPath { grid, n: self.n, channels: self.channels, data }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowMode {
    /// Explicit Young–Euler recursion.
    Euler,
    /// `exp` of the running scalar Young integral; requires `n = 1`.
    Exact1D,
}

/// Entries above this magnitude abort the flow solve.
pub const OVERFLOW_GUARD: f64 = 1e12;
/// Condition numbers above this abort the inversion.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowPath {
    pub base_time: f64,
    pub times: Vec<f64>,
    pub values: Vec<DMatrix<f64>>,
    /// Max difference to the half-step solution, when requested.
    pub richardson_error: Option<f64>,
}

impl FlowPath {
    pub fn terminal(&self) -> &DMatrix<f64> {
        self.values.last().unwrap()
    }

    pub fn n(&self) -> usize {
        self.values[0].nrows()
    }
}

fn euler_flow(alpha: &MatrixPath, driver: &SpaceTimeDriver, x: &SamplePath, base: usize) -> Result<Vec<DMatrix<f64>>> {
    let ts = alpha.grid().times();
    let n = alpha.n();
    let m = driver.channels();
    let mut inc = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut gamma = DMatrix::<f64>::identity(n, n);
    let mut out = vec![gamma.clone()];
    for i in base..ts.len() - 1 {
        driver.increment_into(ts[i], ts[i + 1], x.point(i), &mut inc, &mut scratch);
        let mut step = DMatrix::<f64>::zeros(n, n);
        for k in 0..m {
            step += alpha.at(i, k).tr_mul(&gamma) * inc[k];
        }
        gamma += step;
        if gamma.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_GUARD) {
            return Err(Error::Numerical(format!("flow exceeded {OVERFLOW_GUARD:e} at t = {}", ts[i + 1])));
        }
        out.push(gamma.clone());
    }
    Ok(out)
}

fn refine_path(x: &SamplePath) -> Result<SamplePath> {
    let g = x.grid().refine();
    let mut buf = vec![0.0; x.dim()];
    let mut vals = Vec::with_capacity(g.len() * x.dim());
    for &t in g.times() {
        x.interpolate(t, &mut buf);
        vals.extend_from_slice(&buf);
    }
    SamplePath::new(g, x.dim(), vals)
}

/// Solves the flow from grid index `base` to the end of the grid.
///
/// `alpha` and `x` must share one grid. With `richardson` the solve is
/// repeated on the midpoint-refined grid and the largest nodal difference is
/// reported as an error estimate (Euler mode only).
pub fn solve_flow(
    alpha: &MatrixPath,
    driver: &SpaceTimeDriver,
    x: &SamplePath,
    base: usize,
    mode: FlowMode,
    richardson: bool,
    opts: &YoungOptions,
) -> Result<FlowPath> {
    if alpha.grid().times() != x.grid().times() {
        return domain("coefficient and space path must share one time grid");
    }
    if alpha.channels() != driver.channels() {
        return domain(format!("{} coefficient channels for a {}-channel driver", alpha.channels(), driver.channels()));
    }
    let ts = alpha.grid().times();
    if base + 1 >= ts.len() {
        return domain("flow base index must leave at least one step");
    }
    let times = ts[base..].to_vec();
    match mode {
        FlowMode::Euler => {
            let values = euler_flow(alpha, driver, x, base)?;
            let richardson_error = if richardson {
                let fine = euler_flow(&alpha.refine(), driver, &refine_path(x)?, 2 * base)?;
                let err = values
                    .iter()
                    .enumerate()
                    .map(|(j, g)| (g - &fine[2 * j]).abs().max())
                    .fold(0.0, f64::max);
                Some(err)
            } else {
                None
            };
            Ok(FlowPath { base_time: ts[base], times, values, richardson_error })
        }
        FlowMode::Exact1D => {
            if alpha.n() != 1 {
                return domain("the exponential closed form needs a scalar (N = 1) flow");
            }
            let ch = alpha.channels();
            let y = SamplePath::new(
                alpha.grid().clone(),
                ch,
                (0..ts.len()).flat_map(|i| (0..ch).map(move |k| (i, k))).map(|(i, k)| alpha.at(i, k)[(0, 0)]).collect(),
            )?;
            let (_, running, res) = cumulative_young_integral(&y, x, driver, ts[base], ts[ts.len() - 1], opts)?;
            if !res.converged {
                log::warn!("flow exponent did not converge; last gap {:e}", res.cauchy_gap);
            }
            let m = driver.channels();
            let mut values = Vec::with_capacity(times.len());
            for j in 0..times.len() {
                let e: f64 = running[j * m..(j + 1) * m].iter().sum();
                if e > OVERFLOW_GUARD.ln() {
                    return Err(Error::Numerical(format!("flow exceeded {OVERFLOW_GUARD:e} at t = {}", times[j])));
                }
                values.push(DMatrix::from_element(1, 1, e.exp()));
            }
            Ok(FlowPath { base_time: ts[base], times, values, richardson_error: None })
        }
    }
}

/// Per-time matrix inverse of a flow.
pub fn flow_inverse(flow: &FlowPath) -> Result<FlowPath> {
    let mut values = Vec::with_capacity(flow.values.len());
    for (g, &t) in flow.values.iter().zip(&flow.times) {
        let sv = g.clone().svd(false, false).singular_values;
        let (hi, lo) = (sv.max(), sv.min());
        if !(lo > 0.0) || hi / lo > CONDITION_LIMIT {
            return Err(Error::Numerical(format!("flow is ill-conditioned at t = {t} (condition {:e})", hi / lo)));
        }
        let inv = g.clone().try_inverse().ok_or_else(|| Error::Numerical(format!("flow is singular at t = {t}")))?;
        values.push(inv);
    }
    Ok(FlowPath { base_time: flow.base_time, times: flow.times.clone(), values, richardson_error: None })
}

/// Max residual of the inverse flow in the adjoint equation
/// `Gamma^{-1}_r = I - int_t^r Gamma^{-1}_s alpha_s^T eta(ds, X_s)`,
/// with the integral as a left-point sum on the flow grid.
pub fn adjoint_residual(inverse: &FlowPath, alpha: &MatrixPath, driver: &SpaceTimeDriver, x: &SamplePath) -> Result<f64> {
    let ts = alpha.grid().times();
    let base = ts
        .iter()
        .position(|t| *t == inverse.base_time)
        .ok_or_else(|| Error::Domain("inverse flow base time is not on the coefficient grid".into()))?;
    let n = alpha.n();
    let m = driver.channels();
    let mut inc = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut acc = DMatrix::<f64>::identity(n, n);
    let mut worst = 0.0f64;
    for (j, inv) in inverse.values.iter().enumerate() {
        worst = worst.max((inv - &acc).abs().max());
        let i = base + j;
        if i + 1 < ts.len() {
            driver.increment_into(ts[i], ts[i + 1], x.point(i), &mut inc, &mut scratch);
            for k in 0..m {
                acc -= inv * alpha.at(i, k).transpose() * inc[k];
            }
        }
    }
    Ok(worst)
}

/// `max |Gamma^t_T - Gamma^s_T Gamma^t_s|` for a flow from `t` and one from
/// `s` solved on the tail of the same grid.
pub fn flow_product_defect(from_t: &FlowPath, from_s: &FlowPath) -> Result<f64> {
    let j = from_t
        .times
        .iter()
        .position(|t| *t == from_s.base_time)
        .ok_or_else(|| Error::Domain("second flow does not start on the first flow's grid".into()))?;
    if from_t.times[j..] != from_s.times[..] {
        return domain("flows are not solved on compatible grids");
    }
    if from_t.n() != from_s.n() {
        return domain("flows have different dimensions");
    }
    let composed = from_s.terminal() * &from_t.values[j];
    Ok((from_t.terminal() - composed).abs().max())
}
