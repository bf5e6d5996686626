//! `u^{n,m}(t, x) = Y_0` of the Dirichlet BSDE with the time-mollified
//! driver `eta^{delta_m}` and exit radius `n`, swept over both indices on
//! common random numbers.

use crate::bsde_solver::{solve_localized_bsde, LsmcConfig};
use crate::diffusion::{norm, simulate};
use crate::drivers::mollify_time;
use crate::error::{domain, Result};
use crate::stats::MeanSe;

use super::linear::point_seed;
use super::{grid_from, PdeProblem, PdeRow, PdeSolutionTable};

/// Mollification widths (decreasing, `0` for the driver as given) and exit
/// radii (increasing).
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxSchedule {
    pub deltas: Vec<f64>,
    pub radii: Vec<f64>,
}

impl ApproxSchedule {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        if self.deltas.is_empty() || self.radii.is_empty() {
            return domain("approximation schedule needs at least one width and one radius");
        }
        if self.deltas.windows(2).any(|w| !(w[1] < w[0])) || self.deltas.iter().any(|d| !(*d >= 0.0 && *d < horizon)) {
            return domain("mollification widths must decrease strictly within [0, T)");
        }
        if self.radii.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("radii must increase strictly");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoubleApproxConfig {
    pub samples: usize,
    pub steps: usize,
    pub seed: u64,
    pub lsmc: LsmcConfig,
    pub mollifier_points: usize,
}

impl DoubleApproxConfig {
    pub fn new(samples: usize, steps: usize, seed: u64) -> Self {
        DoubleApproxConfig { samples, steps, seed, lsmc: LsmcConfig { keep_paths: false, ..LsmcConfig::default() }, mollifier_points: 33 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoubleCell {
    pub point: usize,
    pub k: usize,
    pub m: usize,
    pub radius: f64,
    pub delta: f64,
    pub u: MeanSe,
    pub exits: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoubleApproxResult {
    /// Values at the finest `(n_K, delta_M)`.
    pub table: PdeSolutionTable,
    /// Point-major, then radius, then width.
    pub cells: Vec<DoubleCell>,
    /// `max |u^{k,m} - u^{k+1,m}|` over points and widths, per `k`.
    pub radius_diag: Vec<f64>,
    /// `max |u^{k,m} - u^{k,m+1}|` over points and radii, per `m`.
    pub delta_diag: Vec<f64>,
    /// `max |u^{k,m} - u^{K,M}|` per `(k, m)`, radius-major.
    pub to_finest: Vec<f64>,
    n_radii: usize,
    n_deltas: usize,
}

fn shrinking(v: &[f64]) -> bool {
    v.windows(2).filter(|w| w[1] > w[0]).count() <= 1
}

impl DoubleApproxResult {
    pub fn cell(&self, point: usize, k: usize, m: usize) -> &DoubleCell {
        &self.cells[(point * self.n_radii + k) * self.n_deltas + m]
    }

    /// Both diagnostics shrink along the schedule, one violation each allowed.
    pub fn stabilizing(&self) -> bool {
        shrinking(&self.radius_diag) && shrinking(&self.delta_diag)
    }

    /// `radius,delta,max_abs_diff_to_finest`.
    pub fn diagnostics_csv(&self) -> String {
        use crate::csvfmt::fmt_f64;
        let mut out = String::from("radius,delta,max_abs_diff_to_finest\n");
        for k in 0..self.n_radii {
            for m in 0..self.n_deltas {
                let c = self.cell(0, k, m);
                out.push_str(&format!("{},{},{}\n", fmt_f64(c.radius), fmt_f64(c.delta), fmt_f64(self.to_finest[k * self.n_deltas + m])));
            }
        }
        out
    }
}

pub fn solve_young_pde_double_approximation(
    problem: &PdeProblem,
    schedule: &ApproxSchedule,
    points: &[(f64, Vec<f64>)],
    config: &DoubleApproxConfig,
) -> Result<DoubleApproxResult> {
    problem.validate()?;
    schedule.validate(problem.horizon)?;
    if config.samples == 0 || config.steps == 0 || points.is_empty() {
        return domain("double approximation needs samples, steps and at least one point");
    }
    let drivers = schedule
        .deltas
        .iter()
        .map(|&d| if d == 0.0 { Ok(problem.driver.clone()) } else { mollify_time(&problem.driver, d, config.mollifier_points) })
        .collect::<Result<Vec<_>>>()?;
    let (nk, nm) = (schedule.radii.len(), schedule.deltas.len());
    let mut cells = Vec::with_capacity(points.len() * nk * nm);
    for (p, (t, x)) in points.iter().enumerate() {
        if !(schedule.radii[0] > norm(x)) {
            return domain(format!("radius {} must exceed |x| = {}", schedule.radii[0], norm(x)));
        }
        let grid = grid_from(*t, problem.horizon, config.steps)?;
        let batch = simulate(&problem.diffusion, x, &grid, config.samples, point_seed(config.seed, *t, x))?;
        for (k, &radius) in schedule.radii.iter().enumerate() {
            for (m, drv) in drivers.iter().enumerate() {
                let sol = solve_localized_bsde(&problem.bsde_at(x, drv.clone()), radius, &batch, &config.lsmc)?;
                cells.push(DoubleCell { point: p, k, m, radius, delta: schedule.deltas[m], u: sol.y0, exits: sol.exits });
            }
        }
    }
    let at = |p: usize, k: usize, m: usize| cells[(p * nk + k) * nm + m].u.mean;
    let np = points.len();
    let radius_diag = (0..nk - 1)
        .map(|k| (0..np).flat_map(|p| (0..nm).map(move |m| (p, m))).map(|(p, m)| (at(p, k, m) - at(p, k + 1, m)).abs()).fold(0.0, f64::max))
        .collect();
    let delta_diag = (0..nm - 1)
        .map(|m| (0..np).flat_map(|p| (0..nk).map(move |k| (p, k))).map(|(p, k)| (at(p, k, m) - at(p, k, m + 1)).abs()).fold(0.0, f64::max))
        .collect();
    let to_finest = (0..nk)
        .flat_map(|k| (0..nm).map(move |m| (k, m)))
        .map(|(k, m)| (0..np).map(|p| (at(p, k, m) - at(p, nk - 1, nm - 1)).abs()).fold(0.0, f64::max))
        .collect();
    let rows = points
        .iter()
        .enumerate()
        .map(|(p, (t, x))| {
            let c = &cells[(p * nk + nk - 1) * nm + nm - 1];
            PdeRow { t: *t, x: x.clone(), u: c.u.mean, se: c.u.se, radius: c.radius, delta: c.delta, samples: config.samples }
        })
        .collect();
    Ok(DoubleApproxResult { table: PdeSolutionTable { rows }, cells, radius_diag, delta_diag, to_finest, n_radii: nk, n_deltas: nm })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub a: MeanSe,
    pub b: MeanSe,
    pub combined_se: f64,
    pub agree: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    pub fn all_agree(&self) -> bool {
        self.rows.iter().all(|r| r.agree)
    }
}

/// Finest values under two schedules, compared within three combined
/// standard errors.
pub fn schedule_stability(
    problem: &PdeProblem,
    a: &ApproxSchedule,
    b: &ApproxSchedule,
    points: &[(f64, Vec<f64>)],
    config: &DoubleApproxConfig,
) -> Result<StabilityReport> {
    let ra = solve_young_pde_double_approximation(problem, a, points, config)?;
    let rb = solve_young_pde_double_approximation(problem, b, points, config)?;
    let rows = ra
        .table
        .rows
        .iter()
        .zip(&rb.table.rows)
        .map(|(x, y)| {
            let combined_se = (x.se * x.se + y.se * y.se).sqrt();
            StabilityRow { t: x.t, x: x.x.clone(), a: x.estimate(), b: y.estimate(), combined_se, agree: (x.u - y.u).abs() <= 3.0 * combined_se }
        })
        .collect();
    Ok(StabilityReport { rows })
}
