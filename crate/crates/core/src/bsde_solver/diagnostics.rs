//! Exponential-moment monitoring, heuristic growth checks and CSV export of
//! solutions and localization tables.

use crate::csvfmt::{fmt_f64, table};
use crate::diffusion::{first_exit, CoefFn, PathBatch};
use crate::drivers::SpaceTimeDriver;
use crate::error::{domain, Result};
use crate::par;
use crate::stats::log_mean_exp;

use super::localized::{BsdeSolution, DecayRow};

#[derive(Clone, Debug, PartialEq)]
pub struct ExpMomentReport {
    pub times: Vec<f64>,
    /// `log E[exp{q int_{t ^ T_n}^{T_n} alpha . eta(dr, X_r)}]` per grid time.
    pub log_values: Vec<f64>,
    pub sup_log: f64,
    pub argmax_time: f64,
}

impl ExpMomentReport {
    /// `exp(sup_log)`, infinite when it overflows.
    pub fn sup(&self) -> f64 {
        self.sup_log.exp()
    }
}

/// Monte Carlo estimate of the exponential moment of the stopped Young
/// integral, maximized over grid times. Works in log space throughout.
pub fn exponential_moment_diagnostic(
    alpha: &CoefFn,
    driver: &SpaceTimeDriver,
    batch: &PathBatch,
    q: f64,
    radius: f64,
) -> Result<ExpMomentReport> {
    if !(q > 0.0) {
        return domain(format!("exponent q must be positive, got {q}"));
    }
    let exit = first_exit(batch, radius)?;
    let len = batch.grid().len();
    let ts = batch.grid().times();
    let m = driver.channels();
    // Per sample, suffix sums of the stopped integral at every grid time.
    let suffix: Vec<Vec<f64>> = par::map_indexed(batch.samples(), |s| {
        let stop = exit.stop_index(s, len);
        let mut av = vec![0.0; m];
        let mut inc = vec![0.0; m];
        let mut scratch = vec![0.0; m];
        let mut out = vec![0.0; len];
        let mut acc = 0.0;
        for i in (0..stop).rev() {
            let x = batch.at(s, i);
            alpha(ts[i], x, &mut av);
            driver.increment_into(ts[i], ts[i + 1], x, &mut inc, &mut scratch);
            acc += av.iter().zip(&inc).map(|(a, b)| a * b).sum::<f64>();
            out[i] = q * acc;
        }
        out
    });
    let log_values: Vec<f64> = (0..len)
        .map(|i| log_mean_exp(&suffix.iter().map(|r| r[i]).collect::<Vec<_>>()))
        .collect();
    let (imax, sup_log) = log_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    Ok(ExpMomentReport { times: ts.to_vec(), log_values, sup_log, argmax_time: ts[imax] })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthCheck {
    pub exponent: f64,
    /// Fitted on the even-indexed points.
    pub constant: f64,
    /// Largest `|Y| / (C (1 + |x|^kappa))` over the odd-indexed points.
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Heuristic check of `|Y_0(x)| <= C (1 + |x|^kappa)`: `C` is fitted on half
/// of the points and verified on the other half.
pub fn growth_bound_check(norms: &[f64], values: &[f64], exponent: f64, slack: f64) -> Result<GrowthCheck> {
    if norms.len() != values.len() || norms.len() < 2 {
        return domain("growth check needs at least two matching points");
    }
    let env = |x: f64| 1.0 + x.powf(exponent);
    let constant = norms.iter().zip(values).step_by(2).map(|(x, y)| y.abs() / env(*x)).fold(0.0, f64::max);
    let worst_ratio = norms
        .iter()
        .zip(values)
        .skip(1)
        .step_by(2)
        .map(|(x, y)| if constant > 0.0 { y.abs() / (constant * env(*x)) } else if *y == 0.0 { 0.0 } else { f64::INFINITY })
        .fold(0.0, f64::max);
    Ok(GrowthCheck { exponent, constant, worst_ratio, pass: worst_ratio <= slack })
}

/// `time,alive,y_mean,y_coef_*,z_coef_*,residual_mean,residual_se`.
/// Coefficients refer to the standardized basis of each step's fit; steps
/// without a fit, or fitted on fewer basis functions, are padded with zeros.
pub fn solution_csv(sol: &BsdeSolution, basis_len: usize, dim: usize) -> String {
    let mut header: Vec<String> = vec!["time".into(), "alive".into(), "y_mean".into()];
    header.extend((0..basis_len).map(|k| format!("y_coef_{k}")));
    for j in 0..dim {
        header.extend((0..basis_len).map(|k| format!("z{}_coef_{k}", j + 1)));
    }
    header.push("residual_mean".into());
    header.push("residual_se".into());
    let len = sol.grid.len();
    let rows = (0..len).map(|i| {
        let mut r = vec![sol.grid.times()[i], sol.alive[i] as f64];
        let ns = sol.pathwise.len();
        let ym = if sol.y.is_empty() { f64::NAN } else { (0..ns).map(|s| sol.y[s * len + i]).sum::<f64>() / ns as f64 };
        r.push(if i == 0 { sol.y0.mean } else { ym });
        let coef = |fit: &Option<crate::regression::RegressionFit>, col: usize| -> Vec<f64> {
            (0..basis_len)
                .map(|k| fit.as_ref().filter(|f| k < f.coef.nrows()).map(|f| f.coef[(k, col)]).unwrap_or(0.0))
                .collect()
        };
        r.extend(coef(&sol.y_fits[i], 0));
        for j in 0..dim {
            r.extend(coef(&sol.z_fits[i], j));
        }
        let res = sol.martingale_residual.get(i).copied();
        r.push(res.map(|m| m.mean).unwrap_or(0.0));
        r.push(res.map(|m| m.se).unwrap_or(0.0));
        r
    });
    let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    table(&h, rows)
}

/// `radius,y0,y0_se,abs_diff,diff_se,gap_next,exits`.
pub fn decay_table_csv(rows: &[DecayRow]) -> String {
    let mut out = String::from("radius,y0,y0_se,abs_diff,diff_se,gap_next,exits\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(r.radius),
            fmt_f64(r.y0.mean),
            fmt_f64(r.y0.se),
            fmt_f64(r.diff.abs()),
            fmt_f64(r.diff_se),
            fmt_f64(r.gap_next),
            r.exits
        ));
    }
    out
}
