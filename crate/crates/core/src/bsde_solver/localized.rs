//! Least-squares Monte Carlo for
//! `Y_t = h(X_{T_n}) + int f dr + sum_i int g_i(Y_r) eta_i(dr, X_r) - int Z dW`
//! stopped at the first exit from the ball of radius `n`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};

use crate::diffusion::{first_exit, norm, DiffusionSpec, ExitReport, PathBatch};
use crate::drivers::SpaceTimeDriver;
use crate::error::{domain, Error, Result};
use crate::par;
use crate::paths::TimeGrid;
use crate::regression::{self, PolyBasis, RegressionFit, DEFAULT_RIDGE};
use crate::rng::StreamKey;
use crate::stats::{mean_se, MeanSe};

/// `f(t, x, y, z)`.
pub type DriftFn = Arc<dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync>;
/// `g(y)` with one output per driver channel.
pub type YoungCoefFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum Terminal {
    /// `Xi_t = h(X_t)`.
    Markov(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
    /// `Xi_t` from the path prefix up to and including `t` (flat, `dim` per time).
    PathFunctional(Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>),
}

impl Terminal {
    pub fn eval(&self, batch: &PathBatch, s: usize, i: usize) -> f64 {
        match self {
            Terminal::Markov(h) => h(batch.at(s, i)),
            Terminal::PathFunctional(h) => h(&batch.path(s)[..(i + 1) * batch.dim()], batch.dim()),
        }
    }
}

/// Declared growth and regularity constants. Infinite bounds are not checked.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthMeta {
    pub lambda: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub c1: f64,
    pub c_lip: f64,
}

impl Default for GrowthMeta {
    fn default() -> Self {
        GrowthMeta { lambda: 1.0, beta: 0.0, epsilon: 1.0, c1: f64::INFINITY, c_lip: f64::INFINITY }
    }
}

impl GrowthMeta {
    /// `(lambda + beta) / epsilon`, at least one.
    pub fn growth_exponent(&self) -> f64 {
        ((self.lambda + self.beta) / self.epsilon).max(1.0)
    }
}

#[derive(Clone)]
pub struct BsdeProblem {
    pub diffusion: DiffusionSpec,
    pub x0: Vec<f64>,
    pub f: Option<DriftFn>,
    pub g: Option<YoungCoefFn>,
    pub terminal: Terminal,
    pub driver: SpaceTimeDriver,
    pub meta: GrowthMeta,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsmcConfig {
    pub degree: u32,
    pub ridge: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    /// Keep per-sample `Y` and `Z` in the solution.
    pub keep_paths: bool,
}

impl Default for LsmcConfig {
    fn default() -> Self {
        LsmcConfig { degree: 2, ridge: DEFAULT_RIDGE, picard_tol: 1e-6, picard_max: 50, keep_paths: true }
    }
}

#[derive(Clone, Debug)]
pub struct BsdeSolution {
    pub grid: TimeGrid,
    pub radius: f64,
    /// Monte Carlo estimate of `Y_0` with its standard error.
    pub y0: MeanSe,
    /// Per-sample `h(X_{T_n}) + sum (f dt + g . d eta)`; its mean is `Y_0`.
    pub pathwise: Vec<f64>,
    /// `samples x len`, empty unless `keep_paths`.
    pub y: Vec<f64>,
    /// `samples x len x d`, empty unless `keep_paths`.
    pub z: Vec<f64>,
    pub y_fits: Vec<Option<RegressionFit>>,
    pub z_fits: Vec<Option<RegressionFit>>,
    pub alive: Vec<usize>,
    pub picard_iterations: usize,
    pub picard_gaps: Vec<f64>,
    pub converged: bool,
    pub terminal_defect: f64,
    /// Per step, over samples alive at that step.
    pub martingale_residual: Vec<MeanSe>,
    pub max_abs_y: f64,
    pub exit_probability: f64,
    pub exits: usize,
}

impl BsdeSolution {
    /// Regression estimate of `E[Y_{t_i} | X_{t_i} = x]`; the plain value at
    /// a common starting point.
    pub fn y_at(&self, i: usize, x: &[f64]) -> Option<f64> {
        self.y_fits[i].as_ref().map(|f| f.predict(x, 0))
    }

    /// Largest `|mean| / se` of the martingale residual over the steps with
    /// a nonzero standard error.
    pub fn worst_residual_ratio(&self) -> f64 {
        self.martingale_residual
            .iter()
            .map(|m| if m.se > 0.0 { m.mean.abs() / m.se } else if m.mean == 0.0 { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

const MIN_SAMPLES_PER_BASIS: usize = 4;

fn check_problem(problem: &BsdeProblem, radius: f64, batch: &PathBatch) -> Result<()> {
    let r0 = norm(&problem.x0);
    if !(radius > r0) {
        return domain(format!("radius {radius} must exceed |x0| = {r0}"));
    }
    if batch.dim() != problem.diffusion.dim() || batch.dim() != problem.x0.len() {
        return domain("path batch dimension does not match the problem");
    }
    if (0..batch.samples()).any(|s| batch.at(s, 0) != problem.x0.as_slice()) {
        return domain("path batch does not start at x0");
    }
    Ok(())
}

fn states_of(batch: &PathBatch, idx: &[usize], i: usize) -> Vec<f64> {
    let d = batch.dim();
    let mut out = Vec::with_capacity(idx.len() * d);
    for &s in idx {
        out.extend_from_slice(&batch.at(s, i)[..d]);
    }
    out
}

fn degenerate(states: &[f64], d: usize) -> bool {
    let n = states.len() / d.max(1);
    (0..d).all(|k| (1..n).all(|r| states[r * d + k] == states[k]))
}

/// Projects `targets` (`idx.len() x width`) on the basis at time `i`. Small
/// or degenerate sample sets use the constant basis.
fn project(
    batch: &PathBatch,
    idx: &[usize],
    i: usize,
    targets: &[f64],
    width: usize,
    degree: u32,
    ridge: f64,
) -> Result<(RegressionFit, Vec<f64>)> {
    let d = batch.dim();
    let states = states_of(batch, idx, i);
    let full = PolyBasis::new(d, degree);
    let basis = if degenerate(&states, d) || idx.len() < MIN_SAMPLES_PER_BASIS * full.len() {
        PolyBasis::new(d, 0)
    } else {
        full
    };
    let fit = regression::fit(&basis, &states, targets, width, ridge)?;
    let kb = basis.len();
    let pred: Vec<Vec<f64>> = par::map_indexed(idx.len(), |r| {
        let mut buf = vec![0.0; kb];
        let mut o = vec![0.0; width];
        fit.predict_all(&states[r * d..(r + 1) * d], &mut buf, &mut o);
        o
    });
    Ok((fit, pred.concat()))
}

/// Backward induction on the batch grid, stopped at the first exit from the
/// ball of radius `radius`, with the Young term explicit in the previous
/// Picard iterate.
pub fn solve_localized_bsde(problem: &BsdeProblem, radius: f64, batch: &PathBatch, config: &LsmcConfig) -> Result<BsdeSolution> {
    check_problem(problem, radius, batch)?;
    let exit = first_exit(batch, radius)?;
    solve_with_exits(problem, &exit, batch, config)
}

fn solve_with_exits(problem: &BsdeProblem, exit: &ExitReport, batch: &PathBatch, config: &LsmcConfig) -> Result<BsdeSolution> {
    let ns = batch.samples();
    let len = batch.grid().len();
    let d = batch.dim();
    let m = problem.driver.channels();
    let ts = batch.grid().times().to_vec();
    let stop: Vec<usize> = (0..ns).map(|s| exit.stop_index(s, len)).collect();
    let hval: Vec<f64> = par::map_indexed(ns, |s| problem.terminal.eval(batch, s, stop[s]));

    // Driver increments along each path, up to its stopping index.
    let deta: Vec<f64> = if problem.g.is_some() {
        let rows: Vec<Vec<f64>> = par::map_indexed(ns, |s| {
            let mut out = vec![0.0; (len - 1) * m];
            let mut scratch = vec![0.0; m];
            for i in 0..stop[s] {
                problem.driver.increment_into(ts[i], ts[i + 1], batch.at(s, i), &mut out[i * m..(i + 1) * m], &mut scratch);
            }
            out
        });
        rows.concat()
    } else {
        Vec::new()
    };

    let alive_at: Vec<Vec<usize>> = (0..len).map(|i| (0..ns).filter(|&s| i < stop[s]).collect()).collect();
    let mut y_prev: Vec<f64> = (0..ns * len).map(|k| hval[k / len]).collect();
    let mut y_fits: Vec<Option<RegressionFit>> = vec![None; len];
    let mut z_fits: Vec<Option<RegressionFit>> = vec![None; len];
    let mut z_all = vec![0.0; ns * len * d];
    let mut incr = vec![0.0; ns * len];
    let mut gaps = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.picard_max.max(1) {
        iterations += 1;
        let mut y_new: Vec<f64> = (0..ns * len).map(|k| hval[k / len]).collect();
        for i in (0..len - 1).rev() {
            let idx = &alive_at[i];
            if idx.is_empty() {
                continue;
            }
            let dt = ts[i + 1] - ts[i];
            let ztargets: Vec<f64> = idx
                .iter()
                .flat_map(|&s| {
                    let y1 = y_new[s * len + i + 1];
                    batch.dw_at(s, i).iter().map(move |w| y1 * w / dt).collect::<Vec<_>>()
                })
                .collect();
            let (zfit, zpred) = project(batch, idx, i, &ztargets, d, config.degree, config.ridge)?;
            let c: Vec<f64> = par::map_indexed(idx.len(), |r| {
                let s = idx[r];
                let yp = y_prev[s * len + i];
                let mut c = 0.0;
                if let Some(f) = &problem.f {
                    c += f(ts[i], batch.at(s, i), yp, &zpred[r * d..(r + 1) * d]) * dt;
                }
                if let Some(g) = &problem.g {
                    let mut gv = vec![0.0; m];
                    g(yp, &mut gv);
                    c += gv.iter().zip(&deta[(s * (len - 1) + i) * m..(s * (len - 1) + i + 1) * m]).map(|(a, b)| a * b).sum::<f64>();
                }
                c
            });
            let targets: Vec<f64> = idx.iter().zip(&c).map(|(&s, c)| y_new[s * len + i + 1] + c).collect();
            let (yfit, ypred) = project(batch, idx, i, &targets, 1, config.degree, config.ridge)?;
            for (r, &s) in idx.iter().enumerate() {
                y_new[s * len + i] = ypred[r];
                incr[s * len + i] = c[r];
                z_all[(s * len + i) * d..(s * len + i + 1) * d].copy_from_slice(&zpred[r * d..(r + 1) * d]);
            }
            y_fits[i] = Some(yfit);
            z_fits[i] = Some(zfit);
        }
        let gap = y_new.iter().zip(&y_prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        gaps.push(gap);
        y_prev = y_new;
        if !gap.is_finite() {
            return Err(Error::Numerical("Picard iteration diverged".into()));
        }
        if gap < config.picard_tol {
            converged = true;
            break;
        }
        if problem.f.is_none() && problem.g.is_none() && iterations >= 1 {
            // Nothing depends on the iterate; one sweep is the fixed point.
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Picard iteration stopped after {iterations} sweeps with gap {:e}", gaps.last().unwrap_or(&f64::NAN));
    }
    spot_check(problem, batch, &y_prev, &z_all, len)?;

    let pathwise: Vec<f64> = (0..ns).map(|s| hval[s] + (0..stop[s]).map(|i| incr[s * len + i]).sum::<f64>()).collect();
    let y0 = mean_se(&pathwise);
    let terminal_defect = (0..ns).map(|s| (y_prev[s * len + stop[s]] - hval[s]).abs()).fold(0.0, f64::max);
    let martingale_residual: Vec<MeanSe> = (0..len - 1)
        .map(|i| {
            let mut r = Vec::with_capacity(alive_at[i].len());
            let mut zdw = Vec::with_capacity(alive_at[i].len());
            for &s in &alive_at[i] {
                let v: f64 = z_all[(s * len + i) * d..(s * len + i + 1) * d].iter().zip(batch.dw_at(s, i)).map(|(a, b)| a * b).sum();
                r.push(y_prev[s * len + i] - (y_prev[s * len + i + 1] + incr[s * len + i] - v));
                zdw.push(v);
            }
            if r.is_empty() {
                return MeanSe { mean: 0.0, se: 0.0, n: 0 };
            }
            // The projection part of the residual averages to zero by
            // construction, so the sampling error of the mean is that of Z dW.
            MeanSe { se: mean_se(&zdw).se, ..mean_se(&r) }
        })
        .collect();
    let max_abs_y = (0..len)
        .flat_map(|i| alive_at[i].iter().map(move |&s| s * len + i))
        .map(|k| y_prev[k].abs())
        .fold(0.0, f64::max);
    let (y, z) = if config.keep_paths { (y_prev, z_all) } else { (Vec::new(), Vec::new()) };
    Ok(BsdeSolution {
        grid: batch.grid().clone(),
        radius: exit.radius,
        y0,
        pathwise,
        y,
        z,
        y_fits,
        z_fits,
        alive: alive_at.iter().map(|a| a.len()).collect(),
        picard_iterations: iterations,
        picard_gaps: gaps,
        converged,
        terminal_defect,
        martingale_residual,
        max_abs_y,
        exit_probability: exit.probability,
        exits: exit.exits(),
    })
}

const SPOT_CHECKS: usize = 64;

/// Checks the declared `|g|, |g'|, |g''| <= C1` on solved `Y` values and the
/// Lipschitz constant of `f` in `(y, z)` on random secants.
fn spot_check(problem: &BsdeProblem, batch: &PathBatch, y: &[f64], z: &[f64], len: usize) -> Result<()> {
    let meta = problem.meta;
    let d = batch.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(StreamKey::new(batch.seed()).derive(0x5B07).sample(0).random());
    let ns = batch.samples();
    if let (Some(g), true) = (&problem.g, meta.c1.is_finite()) {
        let m = problem.driver.channels();
        let (mut a, mut b, mut c) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        let h = 1e-4;
        for _ in 0..SPOT_CHECKS {
            let v = y[rng.random_range(0..ns * len)];
            g(v, &mut a);
            g(v + h, &mut b);
            g(v - h, &mut c);
            for k in 0..m {
                let d1 = (b[k] - c[k]) / (2.0 * h);
                let d2 = (b[k] - 2.0 * a[k] + c[k]) / (h * h);
                let slack = meta.c1 * (1.0 + 1e-3) + 1e-6;
                if a[k].abs() > slack || d1.abs() > slack || d2.abs() > slack + 1e-3 {
                    return Err(Error::Contract(format!(
                        "g breaks its declared bound C1 = {} at y = {v}: |g| = {}, |g'| ~ {}, |g''| ~ {}",
                        meta.c1,
                        a[k].abs(),
                        d1.abs(),
                        d2.abs()
                    )));
                }
            }
        }
    }
    if let (Some(f), true) = (&problem.f, meta.c_lip.is_finite()) {
        let ts = batch.grid().times();
        for _ in 0..SPOT_CHECKS {
            let i = rng.random_range(0..len - 1);
            let (s1, s2) = (rng.random_range(0..ns), rng.random_range(0..ns));
            let x = batch.at(s1, i);
            let (y1, y2) = (y[s1 * len + i], y[s2 * len + i]);
            let (z1, z2) = (&z[(s1 * len + i) * d..(s1 * len + i + 1) * d], &z[(s2 * len + i) * d..(s2 * len + i + 1) * d]);
            let dist = (y1 - y2).abs() + z1.iter().zip(z2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let df = (f(ts[i], x, y1, z1) - f(ts[i], x, y2, z2)).abs();
            if df > meta.c_lip * dist * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::Contract(format!(
                    "f breaks its declared Lipschitz constant {} at t = {}: secant ratio {}",
                    meta.c_lip,
                    ts[i],
                    df / dist
                )));
            }
        }
    }
    Ok(())
}

/// Strictly increasing exit radii.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationSchedule {
    radii: Vec<f64>,
}

impl LocalizationSchedule {
    pub fn new(radii: Vec<f64>, x0: &[f64]) -> Result<Self> {
        if radii.is_empty() {
            return domain("localization schedule is empty");
        }
        let r0 = norm(x0);
        if radii.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("localization radii must be strictly increasing");
        }
        if !(radii[0] > r0) {
            return domain(format!("radius {} must exceed |x0| = {r0}", radii[0]));
        }
        Ok(LocalizationSchedule { radii })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayRow {
    pub radius: f64,
    pub y0: MeanSe,
    /// `Y^{n_k}_0 - Y^{n_K}_0` on common random numbers.
    pub diff: f64,
    /// Standard error of the paired per-sample difference.
    pub diff_se: f64,
    /// `|Y^{n_k}_0 - Y^{n_{k+1}}_0|`, zero on the last row.
    pub gap_next: f64,
    pub exits: usize,
}

#[derive(Clone, Debug)]
pub struct LocalizationRun {
    /// Solution at the largest radius.
    pub solution: BsdeSolution,
    pub table: Vec<DecayRow>,
}

/// Solves at every radius on the same batch (common random numbers).
pub fn solve_bsde_with_localization(
    problem: &BsdeProblem,
    schedule: &LocalizationSchedule,
    batch: &PathBatch,
    config: &LsmcConfig,
) -> Result<LocalizationRun> {
    let radii = schedule.radii();
    let mut pathwise = Vec::with_capacity(radii.len());
    let mut rows = Vec::with_capacity(radii.len());
    let mut last = None;
    for (k, &n) in radii.iter().enumerate() {
        let cfg = LsmcConfig { keep_paths: config.keep_paths && k + 1 == radii.len(), ..*config };
        let sol = solve_localized_bsde(problem, n, batch, &cfg)?;
        rows.push((n, sol.y0, sol.exits));
        pathwise.push(sol.pathwise.clone());
        last = Some(sol);
    }
    let k_last = radii.len() - 1;
    let table = rows
        .iter()
        .enumerate()
        .map(|(k, &(radius, y0, exits))| {
            let diffs: Vec<f64> = pathwise[k].iter().zip(&pathwise[k_last]).map(|(a, b)| a - b).collect();
            let paired = mean_se(&diffs);
            let gap_next = if k < k_last { (y0.mean - rows[k + 1].1.mean).abs() } else { 0.0 };
            DecayRow { radius, y0, diff: y0.mean - rows[k_last].1.mean, diff_se: paired.se, gap_next, exits }
        })
        .collect();
    Ok(LocalizationRun { solution: last.expect("schedule is nonempty"), table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::simulate;
    use crate::drivers::{make_separable_driver, Regularity};

    fn problem(f: Option<DriftFn>, g: Option<YoungCoefFn>, driver: SpaceTimeDriver, x0: f64) -> BsdeProblem {
        BsdeProblem {
            diffusion: DiffusionSpec::brownian(1),
            x0: vec![x0],
            f,
            g,
            terminal: Terminal::Markov(Arc::new(|x: &[f64]| x[0])),
            driver,
            meta: GrowthMeta::default(),
        }
    }

    fn batch(samples: usize, steps: usize, x0: f64, seed: u64) -> PathBatch {
        simulate(&DiffusionSpec::brownian(1), &[x0], &TimeGrid::uniform(1.0, steps).unwrap(), samples, seed).unwrap()
    }

    fn x_squared_driver() -> SpaceTimeDriver {
        make_separable_driver(1, Arc::new(|x: &[f64], o: &mut [f64]| o[0] = x[0] * x[0]), Arc::new(|t| t), Regularity::new(1.0, 1.0, 1.0).unwrap(), true, 1.0)
    }

    #[test]
    fn conditional_expectation_only() {
        let b = batch(20_000, 16, 0.5, 1);
        let p = problem(None, None, SpaceTimeDriver::zero(1, 1.0), 0.5);
        let sol = solve_localized_bsde(&p, 10.0, &b, &LsmcConfig::default()).unwrap();
        let plain = mean_se(&(0..b.samples()).map(|s| b.at(s, 16)[0]).collect::<Vec<_>>());
        assert!((sol.y0.mean - plain.mean).abs() < 1e-12);
        assert_eq!(sol.terminal_defect, 0.0);
        assert!(sol.converged);
        // E[X_T | X_t] = X_t.
        assert!((sol.y_at(8, &[1.2]).unwrap() - 1.2).abs() < 0.03);
    }

    #[test]
    fn classical_linear_driver() {
        let r = 0.1;
        let b = batch(20_000, 32, 1.0, 2);
        let f: DriftFn = Arc::new(move |_, _, y, _| r * y);
        let p = problem(Some(f), None, SpaceTimeDriver::zero(1, 1.0), 1.0);
        let sol = solve_localized_bsde(&p, 6.0, &b, &LsmcConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(((sol.y0.mean - r.exp()) / r.exp()).abs() < 0.02, "{:?}", sol.y0);
        for w in sol.picard_gaps[1..].windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(sol.worst_residual_ratio() < 4.5, "{}", sol.worst_residual_ratio());
    }

    #[test]
    fn constant_young_coefficient_matches_explicit_solution() {
        let b = batch(20_000, 32, 0.0, 3);
        let g: YoungCoefFn = Arc::new(|_, o: &mut [f64]| o[0] = 1.0);
        let p = problem(None, Some(g), x_squared_driver(), 0.0);
        let sol = solve_localized_bsde(&p, 10.0, &b, &LsmcConfig::default()).unwrap();
        let ts = b.grid().times();
        let direct: Vec<f64> = (0..b.samples())
            .map(|s| b.at(s, 32)[0] + (0..32).map(|i| b.at(s, i)[0].powi(2) * (ts[i + 1] - ts[i])).sum::<f64>())
            .collect();
        let dm = mean_se(&direct);
        assert!((sol.y0.mean - dm.mean).abs() < 1e-10);
        assert!(sol.y0.within(0.5, 3.0), "{:?}", sol.y0);
    }

    #[test]
    fn exits_freeze_terminal_values() {
        let b = batch(5000, 32, 0.0, 4);
        let p = problem(None, None, SpaceTimeDriver::zero(1, 1.0), 0.0);
        let sol = solve_localized_bsde(&p, 0.5, &b, &LsmcConfig::default()).unwrap();
        assert!(sol.exits > 0);
        assert_eq!(sol.terminal_defect, 0.0);
        let exit = first_exit(&b, 0.5).unwrap();
        for s in 0..b.samples() {
            if let Some(e) = exit.exit_index[s] {
                for i in e..33 {
                    assert_eq!(sol.y[s * 33 + i], b.at(s, e)[0]);
                }
            }
        }
        // Optional stopping: E[X_{T_n}] = x0.
        assert!(sol.y0.within(0.0, 3.0));
        assert!(solve_localized_bsde(&p, 0.0, &b, &LsmcConfig::default()).is_err());
    }

    #[test]
    fn bounded_problem_is_inert_to_localization() {
        let b = batch(3000, 16, 0.0, 5);
        let g: YoungCoefFn = Arc::new(|y, o: &mut [f64]| o[0] = y.sin());
        let p = problem(None, Some(g), SpaceTimeDriver::time_only(Arc::new(|t| t), true, 1.0), 0.0);
        let sched = LocalizationSchedule::new(vec![20.0, 30.0, 40.0], &[0.0]).unwrap();
        let run = solve_bsde_with_localization(&p, &sched, &b, &LsmcConfig::default()).unwrap();
        assert!(run.table.iter().all(|r| r.diff == 0.0 && r.exits == 0));
        assert!(LocalizationSchedule::new(vec![1.0, 1.0], &[0.0]).is_err());
        assert!(LocalizationSchedule::new(vec![0.5, 1.0], &[0.7]).is_err());
    }

    #[test]
    fn path_functional_terminal() {
        let b = batch(4000, 16, 0.0, 6);
        let mut p = problem(None, None, SpaceTimeDriver::zero(1, 1.0), 0.0);
        p.terminal = Terminal::PathFunctional(Arc::new(|prefix: &[f64], _| prefix.iter().cloned().fold(f64::MIN, f64::max)));
        let sol = solve_localized_bsde(&p, 10.0, &b, &LsmcConfig::default()).unwrap();
        // E[max_{[0,1]} W] = sqrt(2/pi), discrete monitoring biases it down.
        assert!(sol.y0.mean < (2.0 / std::f64::consts::PI).sqrt() && sol.y0.mean > 0.6);
    }

    #[test]
    fn declared_bounds_are_spot_checked() {
        let b = batch(500, 8, 0.0, 7);
        let g: YoungCoefFn = Arc::new(|y, o: &mut [f64]| o[0] = 3.0 * y.sin());
        let mut p = problem(None, Some(g), x_squared_driver(), 0.0);
        p.meta.c1 = 1.0;
        assert!(matches!(solve_localized_bsde(&p, 5.0, &b, &LsmcConfig::default()), Err(Error::Contract(_))));
        let f: DriftFn = Arc::new(|_, _, y, _| 2.0 * y);
        let mut p = problem(Some(f), None, SpaceTimeDriver::zero(1, 1.0), 0.0);
        p.meta.c_lip = 1.0;
        assert!(matches!(solve_localized_bsde(&p, 5.0, &b, &LsmcConfig::default()), Err(Error::Contract(_))));
    }
}
