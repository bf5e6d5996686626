//! Linear Young BSDEs through the flow representation
//! `Y_t = E_t[((Gamma^t_T)^T xi + int_t^T (Gamma^t_s)^T f_s ds) M_T] / M_t`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::diffusion::{CoefFn, PathBatch};
use crate::drivers::SpaceTimeDriver;
use crate::error::{domain, Error, Result};
use crate::par;
use crate::regression::{self, PolyBasis, RegressionFit, DEFAULT_RIDGE};
use crate::stats::{mean_se, MeanSe};

/// Functional of a whole flat path (`len x d`), writing into `out`.
pub type PathFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// `log M` beyond this magnitude is treated as overflow.
pub const LOG_WEIGHT_LIMIT: f64 = 700.0;

/// Discrete exponential martingale `log M_t` per sample and grid time.
#[derive(Clone, Debug, PartialEq)]
pub struct GirsanovWeights {
    len: usize,
    log_m: Vec<f64>,
}

impl GirsanovWeights {
    pub fn log_at(&self, s: usize, i: usize) -> f64 {
        self.log_m[s * self.len + i]
    }

    pub fn at(&self, s: usize, i: usize) -> f64 {
        self.log_at(s, i).exp()
    }

    pub fn terminal(&self, s: usize) -> f64 {
        self.at(s, self.len - 1)
    }

    pub fn samples(&self) -> usize {
        self.log_m.len() / self.len
    }
}

/// `log M_{i+1} = log M_i + G_i . dW_i - |G_i|^2 dt_i / 2` with `G` taken at
/// the left point.
pub fn girsanov_weight(batch: &PathBatch, g: &CoefFn, bound: f64) -> Result<GirsanovWeights> {
    let len = batch.grid().len();
    let d = batch.dim();
    let ts = batch.grid().times();
    let rows: Vec<Result<Vec<f64>>> = par::map_indexed(batch.samples(), |s| {
        let mut gv = vec![0.0; d];
        let mut out = Vec::with_capacity(len);
        let mut acc = 0.0;
        out.push(0.0);
        for i in 0..len - 1 {
            g(ts[i], batch.at(s, i), &mut gv);
            let n2: f64 = gv.iter().map(|v| v * v).sum();
            if n2.sqrt() > bound * (1.0 + 1e-12) {
                return Err(Error::Contract(format!("|G| = {} exceeds its bound {bound} at t = {}", n2.sqrt(), ts[i])));
            }
            let dw = batch.dw_at(s, i);
            acc += gv.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>() - 0.5 * n2 * (ts[i + 1] - ts[i]);
            if acc.abs() > LOG_WEIGHT_LIMIT {
                return Err(Error::Numerical(format!("Girsanov weight overflow at t = {}", ts[i + 1])));
            }
            out.push(acc);
        }
        Ok(out)
    });
    let mut log_m = Vec::with_capacity(batch.samples() * len);
    for r in rows {
        log_m.extend(r?);
    }
    Ok(GirsanovWeights { len, log_m })
}

/// Coefficients of a linear Young BSDE with `N`-dimensional `Y`.
#[derive(Clone)]
pub struct LinearBsdeSpec {
    pub n: usize,
    /// `(t, x, out)` with `out` holding `M` row-major `N x N` blocks.
    pub alpha: Option<CoefFn>,
    pub alpha_bound: f64,
    /// `(t, x, out)` with `N` outputs.
    pub f: Option<CoefFn>,
    /// `(t, x, out)` with `d` outputs.
    pub girsanov: Option<CoefFn>,
    pub girsanov_bound: f64,
    pub terminal: PathFn,
    pub driver: SpaceTimeDriver,
}

#[derive(Clone, Debug)]
pub struct LinearEval {
    pub time: f64,
    pub index: usize,
    /// Per component: the plain mean at an initial time with a common start,
    /// otherwise the mean of the regressed values.
    pub mean: Vec<MeanSe>,
    pub fit: Option<RegressionFit>,
    /// `samples x N` estimates of `Y_t`.
    pub y: Vec<f64>,
    /// `samples x N x d` regression estimates of `Z_t` (approximate, O(sqrt(dt))
    /// bias); empty at the terminal time.
    pub z_approx: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LinearBsdeSolution {
    pub n: usize,
    pub evals: Vec<LinearEval>,
}

fn time_index(batch: &PathBatch, t: f64) -> Result<usize> {
    let g = batch.grid();
    let i = g.nearest_index(t);
    if (g.times()[i] - t).abs() > 1e-9 * (1.0 + t.abs()) {
        return domain(format!("evaluation time {t} is not on the simulation grid"));
    }
    Ok(i)
}

fn common_start(batch: &PathBatch, i: usize) -> bool {
    let x = batch.at(0, i);
    (1..batch.samples()).all(|s| batch.at(s, i) == x)
}

/// Solves the linear equation at the requested grid times on a simulated batch.
pub fn solve_linear_bsde(spec: &LinearBsdeSpec, batch: &PathBatch, eval_times: &[f64], degree: u32) -> Result<LinearBsdeSolution> {
    let n = spec.n;
    if n == 0 {
        return domain("Y must have at least one component");
    }
    let m = spec.driver.channels();
    let d = batch.dim();
    let len = batch.grid().len();
    let ts = batch.grid().times().to_vec();
    let weights = match &spec.girsanov {
        Some(g) => Some(girsanov_weight(batch, g, spec.girsanov_bound)?),
        None => None,
    };
    let mut evals = Vec::new();
    for &t in eval_times {
        let j = time_index(batch, t)?;
        let rows: Vec<Result<Vec<f64>>> = par::map_indexed(batch.samples(), |s| {
            sample_value(spec, batch, weights.as_ref(), &ts, s, j, n, m)
        });
        let mut phi = Vec::with_capacity(batch.samples() * n);
        for r in rows {
            phi.extend(r?);
        }
        let states: Vec<f64> = (0..batch.samples()).flat_map(|s| batch.at(s, j).to_vec()).collect();
        let (mean, fit, y) = if j == 0 || common_start(batch, j) {
            let mean: Vec<MeanSe> =
                (0..n).map(|c| mean_se(&(0..batch.samples()).map(|s| phi[s * n + c]).collect::<Vec<_>>())).collect();
            let y: Vec<f64> = (0..batch.samples()).flat_map(|_| mean.iter().map(|m| m.mean)).collect();
            (mean, None, y)
        } else {
            let basis = PolyBasis::new(d, degree);
            let fit = regression::fit(&basis, &states, &phi, n, DEFAULT_RIDGE)?;
            let mut y = vec![0.0; batch.samples() * n];
            let mut buf = vec![0.0; basis.len()];
            for s in 0..batch.samples() {
                fit.predict_all(batch.at(s, j), &mut buf, &mut y[s * n..(s + 1) * n]);
            }
            let mean = (0..n).map(|c| mean_se(&(0..batch.samples()).map(|s| y[s * n + c]).collect::<Vec<_>>())).collect();
            (mean, Some(fit), y)
        };
        let z_approx = if j + 1 < len {
            let dt = ts[j + 1] - ts[j];
            let mut tz = vec![0.0; batch.samples() * n * d];
            for s in 0..batch.samples() {
                let dw = batch.dw_at(s, j);
                for c in 0..n {
                    for k in 0..d {
                        tz[(s * n + c) * d + k] = phi[s * n + c] * dw[k] / dt;
                    }
                }
            }
            let basis = if j == 0 || common_start(batch, j) { PolyBasis::new(d, 0) } else { PolyBasis::new(d, degree) };
            let zfit = regression::fit(&basis, &states, &tz, n * d, DEFAULT_RIDGE)?;
            let mut z = vec![0.0; batch.samples() * n * d];
            let mut buf = vec![0.0; basis.len()];
            for s in 0..batch.samples() {
                zfit.predict_all(batch.at(s, j), &mut buf, &mut z[s * n * d..(s + 1) * n * d]);
            }
            z
        } else {
            Vec::new()
        };
        evals.push(LinearEval { time: ts[j], index: j, mean, fit, y, z_approx });
    }
    Ok(LinearBsdeSolution { n, evals })
}

#[allow(clippy::too_many_arguments)]
fn sample_value(
    spec: &LinearBsdeSpec,
    batch: &PathBatch,
    weights: Option<&GirsanovWeights>,
    ts: &[f64],
    s: usize,
    j: usize,
    n: usize,
    m: usize,
) -> Result<Vec<f64>> {
    let len = ts.len();
    let mut inc = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut fv = vec![0.0; n];
    let mut av = vec![0.0; m * n * n];
    let mut xi = vec![0.0; n];
    (spec.terminal)(batch.path(s), &mut xi);
    let mut out = vec![0.0; n];
    if n == 1 {
        // Scalar flows are exponentials of the running Young sum.
        let mut expo = 0.0f64;
        for i in j..len - 1 {
            let x = batch.at(s, i);
            if let Some(f) = &spec.f {
                f(ts[i], x, &mut fv);
                out[0] += expo.exp() * fv[0] * (ts[i + 1] - ts[i]);
            }
            if let Some(a) = &spec.alpha {
                a(ts[i], x, &mut av);
                check_alpha(&av, spec.alpha_bound, ts[i])?;
                spec.driver.increment_into(ts[i], ts[i + 1], x, &mut inc, &mut scratch);
                expo += av.iter().zip(&inc).map(|(a, e)| a * e).sum::<f64>();
            }
            if expo > crate::young_calculus::OVERFLOW_GUARD.ln() {
                return Err(Error::Numerical(format!("flow exceeded the overflow guard at t = {}", ts[i + 1])));
            }
        }
        out[0] += expo.exp() * xi[0];
    } else {
        let mut gamma = DMatrix::<f64>::identity(n, n);
        let mut acc = DVector::<f64>::zeros(n);
        for i in j..len - 1 {
            let x = batch.at(s, i);
            if let Some(f) = &spec.f {
                f(ts[i], x, &mut fv);
                acc += gamma.tr_mul(&DVector::from_column_slice(&fv)) * (ts[i + 1] - ts[i]);
            }
            if let Some(a) = &spec.alpha {
                a(ts[i], x, &mut av);
                check_alpha(&av, spec.alpha_bound, ts[i])?;
                spec.driver.increment_into(ts[i], ts[i + 1], x, &mut inc, &mut scratch);
                let mut step = DMatrix::<f64>::zeros(n, n);
                for k in 0..m {
                    let ak = DMatrix::from_row_slice(n, n, &av[k * n * n..(k + 1) * n * n]);
                    step += ak.tr_mul(&gamma) * inc[k];
                }
                gamma += step;
                if gamma.iter().any(|v| !v.is_finite() || v.abs() > crate::young_calculus::OVERFLOW_GUARD) {
                    return Err(Error::Numerical(format!("flow exceeded the overflow guard at t = {}", ts[i + 1])));
                }
            }
        }
        let y = gamma.tr_mul(&DVector::from_column_slice(&xi)) + acc;
        out.copy_from_slice(y.as_slice());
    }
    if let Some(w) = weights {
        let ratio = (w.log_at(s, len - 1) - w.log_at(s, j)).exp();
        out.iter_mut().for_each(|v| *v *= ratio);
    }
    Ok(out)
}

fn check_alpha(av: &[f64], bound: f64, t: f64) -> Result<()> {
    let worst = av.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(worst <= bound * (1.0 + 1e-12)) {
        return Err(Error::Contract(format!("|alpha| = {worst} exceeds its bound {bound} at t = {t}")));
    }
    Ok(())
}

/// Both sides of the tower rule over `[t, T]`, as Monte Carlo means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TowerReport {
    /// `sum A_r B_r (eta(r', X_r) - eta(r, X_r))`.
    pub direct: MeanSe,
    /// The same sum with `A_r` replaced by its regression on `X_r`.
    pub projected: MeanSe,
    /// `sqrt(se_direct^2 + se_projected^2)`.
    pub combined_se: f64,
    /// Paired statistics of the per-sample difference.
    pub paired: MeanSe,
}

impl TowerReport {
    pub fn defect(&self) -> f64 {
        self.direct.mean - self.projected.mean
    }

    pub fn consistent(&self, k: f64) -> bool {
        self.defect().abs() <= k * self.combined_se
    }
}

/// `a` and `b` hold one value per sample and grid time (`samples x len`).
/// `E_r[A_r]` is a degree-`degree` polynomial regression on `X_r`.
pub fn tower_rule_defect(a: &[f64], b: &[f64], driver: &SpaceTimeDriver, batch: &PathBatch, t: f64, degree: u32) -> Result<TowerReport> {
    let len = batch.grid().len();
    let ns = batch.samples();
    if a.len() != ns * len || b.len() != ns * len {
        return domain("process arrays must hold samples x grid length values");
    }
    if driver.channels() != 1 {
        return domain("the tower rule is stated for a single-channel driver");
    }
    let j = time_index(batch, t)?;
    let ts = batch.grid().times();
    let d = batch.dim();
    let basis = PolyBasis::new(d, degree);
    let mut lhs = vec![0.0; ns];
    let mut rhs = vec![0.0; ns];
    let mut buf = vec![0.0; basis.len()];
    for i in j..len.saturating_sub(1) {
        let ar: Vec<f64> = (0..ns).map(|s| a[s * len + i]).collect();
        let cond: Vec<f64> = if i == 0 || common_start(batch, i) {
            let m = ar.iter().sum::<f64>() / ns as f64;
            vec![m; ns]
        } else {
            let states: Vec<f64> = (0..ns).flat_map(|s| batch.at(s, i).to_vec()).collect();
            let fit = regression::fit(&basis, &states, &ar, 1, DEFAULT_RIDGE)?;
            (0..ns)
                .map(|s| {
                    let mut o = [0.0];
                    fit.predict_all(batch.at(s, i), &mut buf, &mut o);
                    o[0]
                })
                .collect()
        };
        for s in 0..ns {
            let de = driver.increment1(ts[i], ts[i + 1], batch.at(s, i));
            let bv = b[s * len + i];
            lhs[s] += ar[s] * bv * de;
            rhs[s] += cond[s] * bv * de;
        }
    }
    let direct = mean_se(&lhs);
    let projected = mean_se(&rhs);
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(x, y)| x - y).collect();
    let paired = mean_se(&diff);
    let combined_se = (direct.se.powi(2) + projected.se.powi(2)).sqrt();
    Ok(TowerReport { direct, projected, combined_se, paired })
}

/// Fills a `samples x len` process from a per-sample, per-index closure.
pub fn process_from_fn(batch: &PathBatch, f: impl Fn(&[f64], usize) -> f64 + Sync + Send) -> Vec<f64> {
    let len = batch.grid().len();
    let rows: Vec<Vec<f64>> = par::map_indexed(batch.samples(), |s| (0..len).map(|i| f(batch.path(s), i)).collect());
    rows.concat()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{simulate, DiffusionSpec};
    use crate::drivers::{make_separable_driver, Regularity};
    use crate::paths::TimeGrid;

    fn batch(samples: usize, steps: usize, x0: f64, seed: u64) -> PathBatch {
        simulate(&DiffusionSpec::brownian(1), &[x0], &TimeGrid::uniform(1.0, steps).unwrap(), samples, seed).unwrap()
    }

    fn terminal_x(len: usize) -> PathFn {
        Arc::new(move |p: &[f64], o: &mut [f64]| o[0] = p[len - 1])
    }

    fn eta_t() -> SpaceTimeDriver {
        SpaceTimeDriver::time_only(Arc::new(|t| t), true, 1.0)
    }

    #[test]
    fn girsanov_normalization() {
        let b = batch(100_000, 32, 0.0, 5);
        let zero: CoefFn = Arc::new(|_, _, o: &mut [f64]| o[0] = 0.0);
        let w = girsanov_weight(&b, &zero, 1.0).unwrap();
        assert!((0..b.samples()).all(|s| w.terminal(s) == 1.0));
        let c: CoefFn = Arc::new(|_, _, o: &mut [f64]| o[0] = 0.5);
        let w = girsanov_weight(&b, &c, 1.0).unwrap();
        let mt: Vec<f64> = (0..b.samples()).map(|s| w.terminal(s)).collect();
        assert!(mean_se(&mt).within(1.0, 3.0));
        // log M_T ~ N(-1/8, 1/4) for constant G = 1/2.
        let logs: Vec<f64> = (0..b.samples()).map(|s| w.log_at(s, 32)).collect();
        assert!(mean_se(&logs).within(-0.125, 3.0));
        assert_eq!(w, girsanov_weight(&b, &c, 1.0).unwrap());
        assert!(matches!(girsanov_weight(&b, &c, 0.1), Err(Error::Contract(_))));
    }

    fn spec(n: usize, alpha: Option<CoefFn>, driver: SpaceTimeDriver, terminal: PathFn) -> LinearBsdeSpec {
        LinearBsdeSpec { n, alpha, alpha_bound: 10.0, f: None, girsanov: None, girsanov_bound: 1.0, terminal, driver }
    }

    #[test]
    fn martingale_case() {
        let b = batch(50_000, 16, 0.7, 1);
        let sol = solve_linear_bsde(&spec(1, None, eta_t(), terminal_x(17)), &b, &[0.0, 0.5], 2).unwrap();
        assert!(sol.evals[0].mean[0].within(0.7, 3.0));
        // Interior regression of X_T on X_{1/2} is the identity map.
        let fit = sol.evals[1].fit.as_ref().unwrap();
        assert!((fit.predict(&[1.3], 0) - 1.3).abs() < 0.02);
        // Z = 1 for Y = X.
        let zs = &sol.evals[0].z_approx;
        assert!((zs.iter().sum::<f64>() / zs.len() as f64 - 1.0).abs() < 0.05);
    }

    #[test]
    fn exponential_scaling() {
        let b = batch(20_000, 16, 0.3, 2);
        let one: CoefFn = Arc::new(|_, _, o: &mut [f64]| o[0] = 1.0);
        let sq: PathFn = Arc::new(|p: &[f64], o: &mut [f64]| o[0] = p[16] * p[16]);
        let sol = solve_linear_bsde(&spec(1, Some(one), eta_t(), sq.clone()), &b, &[0.0], 2).unwrap();
        let plain = solve_linear_bsde(&spec(1, None, eta_t(), sq), &b, &[0.0], 2).unwrap();
        let e = sol.evals[0].mean[0].mean;
        assert!((e - 1f64.exp() * plain.evals[0].mean[0].mean).abs() < 1e-12 * e);
    }

    #[test]
    fn matrix_flow_with_diagonal_alpha_matches_scalar() {
        let b = batch(2000, 16, 0.1, 3);
        let d = make_separable_driver(1, Arc::new(|x: &[f64], o: &mut [f64]| o[0] = x[0].cos()), Arc::new(|t| t), Regularity::lipschitz(), true, 1.0);
        let diag: CoefFn = Arc::new(|_, _, o: &mut [f64]| o.copy_from_slice(&[0.5, 0.0, 0.0, 0.5]));
        let half: CoefFn = Arc::new(|_, _, o: &mut [f64]| o[0] = 0.5);
        let two: PathFn = Arc::new(|p: &[f64], o: &mut [f64]| o.copy_from_slice(&[p[16], p[16]]));
        let v = solve_linear_bsde(&spec(2, Some(diag), d.clone(), two), &b, &[0.0], 1).unwrap();
        let s = solve_linear_bsde(&spec(1, Some(half), d, terminal_x(17)), &b, &[0.0], 1).unwrap();
        // Euler products and exponentials agree to first order in the step.
        assert!((v.evals[0].mean[0].mean - s.evals[0].mean[0].mean).abs() < 0.05);
        assert_eq!(v.evals[0].mean[0].mean, v.evals[0].mean[1].mean);
    }

    #[test]
    fn tower_rule_with_terminal_dependent_process() {
        let b = batch(50_000, 32, 0.2, 4);
        let len = 33;
        let a = process_from_fn(&b, |p, _| p[len - 1]);
        let one = vec![1.0; a.len()];
        let r = tower_rule_defect(&a, &one, &eta_t(), &b, 0.0, 2).unwrap();
        assert!(r.consistent(3.0), "{r:?}");
        assert!(r.direct.within(0.2, 3.0));
        let end = tower_rule_defect(&a, &one, &eta_t(), &b, 1.0, 2).unwrap();
        assert_eq!(end.direct.mean, 0.0);
        assert_eq!(end.projected.mean, 0.0);
        let det = process_from_fn(&b, |_, i| (i as f64).sin());
        let r = tower_rule_defect(&det, &one, &eta_t(), &b, 0.0, 2).unwrap();
        assert!(r.defect().abs() < 1e-12);
    }
}
