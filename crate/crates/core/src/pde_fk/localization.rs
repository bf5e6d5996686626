//! Decay of the localization error `|u^n(0, x) - u(0, x)|` in the radius,
//! with the largest radius standing in for the whole-space solution.

use crate::bsde_solver::{solve_bsde_with_localization, LocalizationSchedule, LsmcConfig};
use crate::csvfmt::fmt_f64;
use crate::diffusion::{norm, simulate};
use crate::error::{domain, Error, Result};
use crate::paths::TimeGrid;
use crate::stats::{fit_line, LineFit, MeanSe};

use super::linear::point_seed;
use super::PdeProblem;

/// Exponents of the growth and Lipschitz split of the reaction term:
/// `|F(t,x,0,0)| <= C(1+|x|^theta3)`, `y`-Lipschitz with weight
/// `1+|x|^theta2` and `z`-Lipschitz with weight `1+|x|^theta1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonLipMeta {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub constant: f64,
}

impl NonLipMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta1 >= 0.0 && self.theta1 < 1.0) || !(self.theta2 >= 0.0 && self.theta2 < 2.0) || !(self.theta3 >= 0.0) {
            return domain(format!(
                "need 0 <= theta1 < 1, 0 <= theta2 < 2, theta3 >= 0, got ({}, {}, {})",
                self.theta1, self.theta2, self.theta3
            ));
        }
        if !(self.constant > 0.0) {
            return domain("growth constant must be positive");
        }
        Ok(())
    }

    /// Secant spot checks of the declared bounds for `f` on a small lattice.
    pub fn spot_check(&self, problem: &PdeProblem) -> Result<()> {
        self.validate()?;
        let Some(f) = &problem.f else { return Ok(()) };
        let d = problem.diffusion.dim();
        let c = self.constant * (1.0 + 1e-9);
        let w = |x: &[f64], th: f64| 1.0 + norm(x).powf(th);
        let zero = vec![0.0; d];
        for k in 0..7 {
            let x: Vec<f64> = (0..d).map(|j| -3.0 + ((k + j) % 7) as f64).collect();
            for t in [0.0, 0.5 * problem.horizon, problem.horizon] {
                let f0 = f(t, &x, 0.0, &zero);
                if f0.abs() > c * w(&x, self.theta3) {
                    return Err(Error::Contract(format!("|F(t, x, 0, 0)| = {} exceeds its growth bound at x = {x:?}", f0.abs())));
                }
                for (y1, y2) in [(-1.0, 0.5), (0.2, 2.0)] {
                    let r = (f(t, &x, y1, &zero) - f(t, &x, y2, &zero)).abs() / (y1 - y2).abs();
                    if r > c * w(&x, self.theta2) {
                        return Err(Error::Contract(format!("y-secant {r} of F exceeds its bound at x = {x:?}")));
                    }
                }
                let z1 = vec![0.7; d];
                let r = (f(t, &x, 0.3, &z1) - f(t, &x, 0.3, &zero)).abs() / norm(&z1);
                if r > c * w(&x, self.theta1) {
                    return Err(Error::Contract(format!("z-secant {r} of F exceeds its bound at x = {x:?}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadiusStatus {
    Used,
    /// No sample exits: the error is exactly zero.
    Saturated,
    /// Difference within two standard errors of zero.
    Dropped,
    Reference,
}

impl RadiusStatus {
    fn label(self) -> &'static str {
        match self {
            RadiusStatus::Used => "used",
            RadiusStatus::Saturated => "saturated",
            RadiusStatus::Dropped => "dropped",
            RadiusStatus::Reference => "reference",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocRow {
    pub radius: f64,
    pub u: MeanSe,
    pub diff: f64,
    pub diff_se: f64,
    pub exits: usize,
    pub status: RadiusStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationPoint {
    pub x: Vec<f64>,
    pub rows: Vec<LocRow>,
    /// `log |diff|` against `n^2` over the used radii.
    pub fit: Option<LineFit>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationReport {
    pub points: Vec<LocalizationPoint>,
    /// Decay intercept against `|x|^2` over the points with a fit.
    pub intercept_fit: Option<LineFit>,
}

impl LocalizationReport {
    pub fn slopes_negative(&self) -> bool {
        self.points.iter().all(|p| p.fit.map(|f| f.slope < 0.0).unwrap_or(false))
    }

    /// Sign check on the `|x|^2` dependence of the intercepts.
    pub fn intercepts_increase(&self) -> Option<bool> {
        self.intercept_fit.map(|f| f.slope > 0.0)
    }

    /// `x1..xd,radius,u,u_se,abs_diff,diff_se,exits,status`.
    pub fn rows_csv(&self) -> String {
        let d = self.points.first().map(|p| p.x.len()).unwrap_or(1);
        let mut out: String = (1..=d).map(|k| format!("x{k},")).collect();
        out.push_str("radius,u,u_se,abs_diff,diff_se,exits,status\n");
        for p in &self.points {
            let xs: String = p.x.iter().map(|v| format!("{},", fmt_f64(*v))).collect();
            for r in &p.rows {
                out.push_str(&format!(
                    "{xs}{},{},{},{},{},{},{}\n",
                    fmt_f64(r.radius),
                    fmt_f64(r.u.mean),
                    fmt_f64(r.u.se),
                    fmt_f64(r.diff.abs()),
                    fmt_f64(r.diff_se),
                    r.exits,
                    r.status.label()
                ));
            }
        }
        out
    }

    /// `x1..xd,slope,intercept,r2,used`.
    pub fn fits_csv(&self) -> String {
        let d = self.points.first().map(|p| p.x.len()).unwrap_or(1);
        let mut out: String = (1..=d).map(|k| format!("x{k},")).collect();
        out.push_str("slope,intercept,r2,used\n");
        for p in &self.points {
            let xs: String = p.x.iter().map(|v| format!("{},", fmt_f64(*v))).collect();
            let (s, i, r2, n) = p.fit.map(|f| (f.slope, f.intercept, f.r2, f.n)).unwrap_or((f64::NAN, f64::NAN, f64::NAN, 0));
            out.push_str(&format!("{xs}{},{},{},{n}\n", fmt_f64(s), fmt_f64(i), fmt_f64(r2)));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalizationConfig {
    pub samples: usize,
    pub steps: usize,
    pub seed: u64,
    pub lsmc: LsmcConfig,
}

/// Solves at every radius from each `x` at time zero on common random
/// numbers and fits the decay of the difference to the largest radius.
pub fn localization_error_experiment(
    problem: &PdeProblem,
    meta: &NonLipMeta,
    radii: &[f64],
    xs: &[Vec<f64>],
    config: &LocalizationConfig,
) -> Result<LocalizationReport> {
    problem.validate()?;
    meta.spot_check(problem)?;
    if radii.len() < 3 {
        return domain("the decay fit needs at least three radii");
    }
    let grid = TimeGrid::uniform(problem.horizon, config.steps)?;
    let lsmc = LsmcConfig { keep_paths: false, ..config.lsmc };
    let mut points = Vec::with_capacity(xs.len());
    for x in xs {
        let schedule = LocalizationSchedule::new(radii.to_vec(), x)?;
        let batch = simulate(&problem.diffusion, x, &grid, config.samples, point_seed(config.seed, 0.0, x))?;
        let run = solve_bsde_with_localization(&problem.bsde_at(x, problem.driver.clone()), &schedule, &batch, &lsmc)?;
        let last = run.table.len() - 1;
        let mut warnings = Vec::new();
        let rows: Vec<LocRow> = run
            .table
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let status = if k == last {
                    RadiusStatus::Reference
                } else if r.exits == 0 {
                    RadiusStatus::Saturated
                } else if r.diff.abs() <= 2.0 * r.diff_se {
                    warnings.push(format!("radius {} dropped: difference {:.3e} within noise (se {:.3e})", r.radius, r.diff, r.diff_se));
                    RadiusStatus::Dropped
                } else {
                    RadiusStatus::Used
                };
                LocRow { radius: r.radius, u: r.y0, diff: r.diff, diff_se: r.diff_se, exits: r.exits, status }
            })
            .collect();
        let (ns, ls): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.status == RadiusStatus::Used).map(|r| (r.radius * r.radius, r.diff.abs().ln())).unzip();
        let fit = if ns.len() >= 2 { Some(fit_line(&ns, &ls)?) } else { None };
        if fit.is_none() {
            warnings.push("fewer than two radii usable for the decay fit".into());
        }
        points.push(LocalizationPoint { x: x.clone(), rows, fit, warnings });
    }
    let (x2, icpt): (Vec<f64>, Vec<f64>) = points.iter().filter_map(|p| p.fit.map(|f| (norm(&p.x).powi(2), f.intercept))).unzip();
    let distinct = x2.iter().any(|v| (v - x2[0]).abs() > 0.0);
    let intercept_fit = if x2.len() >= 2 && distinct { Some(fit_line(&x2, &icpt)?) } else { None };
    Ok(LocalizationReport { points, intercept_fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde_solver::{DriftFn, GrowthMeta};
    use crate::diffusion::DiffusionSpec;
    use crate::drivers::SpaceTimeDriver;
    use std::sync::Arc;

    fn problem(diffusion: DiffusionSpec, f: Option<DriftFn>) -> PdeProblem {
        PdeProblem {
            diffusion,
            f,
            g: None,
            driver: SpaceTimeDriver::zero(1, 1.0),
            terminal: Arc::new(|x: &[f64]| x[0]),
            terminal_lipschitz: 1.0,
            horizon: 1.0,
            meta: GrowthMeta::default(),
        }
    }

    fn meta() -> NonLipMeta {
        NonLipMeta { theta1: 0.5, theta2: 1.0, theta3: 1.0, constant: 2.0 }
    }

    fn cfg(samples: usize) -> LocalizationConfig {
        LocalizationConfig { samples, steps: 32, seed: 21, lsmc: LsmcConfig::default() }
    }

    #[test]
    fn drifted_decay_and_saturation() {
        let p = problem(DiffusionSpec::drifted_brownian(vec![0.5]), None);
        let rep = localization_error_experiment(&p, &meta(), &[1.5, 2.0, 2.5, 3.0, 20.0, 30.0], &[vec![0.0]], &cfg(40_000)).unwrap();
        let pt = &rep.points[0];
        assert!(pt.fit.unwrap().slope < 0.0, "{pt:?}");
        let sat = &pt.rows[4];
        assert_eq!(sat.status, RadiusStatus::Saturated);
        assert_eq!(sat.diff, 0.0);
        assert_eq!(pt.rows[5].status, RadiusStatus::Reference);
        assert!(rep.rows_csv().contains("saturated"));
    }

    #[test]
    fn noise_level_differences_are_dropped() {
        // A martingale terminal: every radius agrees in mean.
        let p = problem(DiffusionSpec::brownian(1), None);
        let rep = localization_error_experiment(&p, &meta(), &[2.8, 3.0, 3.2, 40.0], &[vec![0.0]], &cfg(2000)).unwrap();
        let pt = &rep.points[0];
        assert!(pt.rows.iter().all(|r| r.status != RadiusStatus::Used || r.diff.abs() > 2.0 * r.diff_se));
        assert!(!pt.warnings.is_empty() || pt.fit.is_some());
    }

    #[test]
    fn metadata_checks() {
        assert!(NonLipMeta { theta1: 1.0, ..meta() }.validate().is_err());
        assert!(NonLipMeta { theta2: 2.0, ..meta() }.validate().is_err());
        let steep: DriftFn = Arc::new(|_, x, y, _| x[0].powi(2) * y);
        let p = problem(DiffusionSpec::brownian(1), Some(steep));
        assert!(matches!(meta().spot_check(&p), Err(Error::Contract(_))));
        let mild: DriftFn = Arc::new(|_, x, y, _| x[0].abs().sqrt() * y.sin());
        assert!(meta().spot_check(&problem(DiffusionSpec::brownian(1), Some(mild))).is_ok());
    }
}
