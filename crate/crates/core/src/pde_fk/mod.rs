//! Feynman–Kac solvers for `-d_t u = L u + g(u) d_t eta(t, x) (+ f)`,
//! `u(T) = h`, with the finite-difference and weak-form checks used to
//! validate them.

use std::sync::Arc;

use crate::bsde_solver::{BsdeProblem, DriftFn, GrowthMeta, Terminal, YoungCoefFn};
use crate::csvfmt::fmt_f64;
use crate::diffusion::DiffusionSpec;
use crate::drivers::SpaceTimeDriver;
use crate::error::{domain, Error, Result};
use crate::paths::TimeGrid;
use crate::stats::MeanSe;

mod double_approx;
mod fd_oracle;
mod linear;
mod localization;
mod weak;

pub use double_approx::{
    schedule_stability, solve_young_pde_double_approximation, ApproxSchedule, DoubleApproxConfig, DoubleApproxResult, DoubleCell,
    StabilityReport, StabilityRow,
};
pub use fd_oracle::{fd_oracle, FdSolution, FdSpec};
pub use linear::{solve_linear_young_pde, FkConfig};
pub use localization::{
    localization_error_experiment, LocRow, LocalizationConfig, LocalizationPoint, LocalizationReport, NonLipMeta, RadiusStatus,
};
pub use weak::{weak_solution_residual, TestFunction, UGrid, WeakResidual};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A parabolic problem with uniformly elliptic diffusion.
#[derive(Clone)]
pub struct PdeProblem {
    pub diffusion: DiffusionSpec,
    pub f: Option<DriftFn>,
    pub g: Option<YoungCoefFn>,
    pub driver: SpaceTimeDriver,
    pub terminal: ScalarFn,
    pub terminal_lipschitz: f64,
    pub horizon: f64,
    pub meta: GrowthMeta,
}

impl PdeProblem {
    /// Checks ellipticity and spot-checks the terminal Lipschitz constant on
    /// secants between points of a small lattice.
    pub fn validate(&self) -> Result<()> {
        if !(self.diffusion.ellipticity() > 0.0) {
            return domain("the PDE solvers need a declared ellipticity constant nu > 0");
        }
        if !(self.horizon > 0.0) {
            return domain("horizon must be positive");
        }
        let d = self.diffusion.dim();
        let pts: Vec<Vec<f64>> = (0..9)
            .map(|k| (0..d).map(|j| -3.0 + 0.75 * ((k + 2 * j) % 9) as f64).collect())
            .collect();
        for a in &pts {
            for b in &pts {
                let dist = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
                if dist == 0.0 {
                    continue;
                }
                let ratio = ((self.terminal)(a) - (self.terminal)(b)).abs() / dist;
                if ratio > self.terminal_lipschitz * (1.0 + 1e-9) {
                    return Err(Error::Contract(format!(
                        "terminal secant ratio {ratio} exceeds the declared Lipschitz constant {}",
                        self.terminal_lipschitz
                    )));
                }
            }
        }
        Ok(())
    }

    /// The BSDE started at `x0` whose initial value is `u(t, x0)`.
    pub fn bsde_at(&self, x0: &[f64], driver: SpaceTimeDriver) -> BsdeProblem {
        let h = self.terminal.clone();
        BsdeProblem {
            diffusion: self.diffusion.clone(),
            x0: x0.to_vec(),
            f: self.f.clone(),
            g: self.g.clone(),
            terminal: Terminal::Markov(h),
            driver,
            meta: self.meta,
        }
    }
}

/// Grid on `[t, T]` with a step count proportional to its length.
pub(crate) fn grid_from(t: f64, horizon: f64, steps: usize) -> Result<TimeGrid> {
    if !(t >= 0.0 && t < horizon) {
        return domain(format!("evaluation time {t} must lie in [0, {horizon})"));
    }
    let k = ((steps as f64) * (horizon - t) / horizon).round().max(1.0) as usize;
    TimeGrid::uniform_between(t, horizon, k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: f64,
    pub se: f64,
    /// Exit radius, infinite for the whole-space solver.
    pub radius: f64,
    /// Mollification width, zero when the driver is used as given.
    pub delta: f64,
    pub samples: usize,
}

impl PdeRow {
    pub fn estimate(&self) -> MeanSe {
        MeanSe { mean: self.u, se: self.se, n: self.samples }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PdeSolutionTable {
    pub rows: Vec<PdeRow>,
}

impl PdeSolutionTable {
    /// `t,x1..xd,u,se,n,delta,samples`.
    pub fn to_csv(&self) -> String {
        let d = self.rows.first().map(|r| r.x.len()).unwrap_or(1);
        let mut out = String::from("t");
        for k in 0..d {
            out.push_str(&format!(",x{}", k + 1));
        }
        out.push_str(",u,se,n,delta,samples\n");
        for r in &self.rows {
            out.push_str(&fmt_f64(r.t));
            for v in &r.x {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push_str(&format!(
                ",{},{},{},{},{}\n",
                fmt_f64(r.u),
                fmt_f64(r.se),
                fmt_f64(r.radius),
                fmt_f64(r.delta),
                r.samples
            ));
        }
        out
    }
}
