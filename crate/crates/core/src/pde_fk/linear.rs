use crate::diffusion::{path_streams, DiffusionSpec, Stepper};
use crate::drivers::SpaceTimeDriver;
use crate::error::{domain, Error, Result};
use crate::par;
use crate::rng::hash_point;
use crate::stats::mean_se;
use crate::young_calculus::young_sum_along;

use super::{grid_from, PdeRow, PdeSolutionTable};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FkConfig {
    pub samples: usize,
    /// Steps over the full horizon; shorter intervals get proportionally fewer.
    pub steps: usize,
    pub seed: u64,
}

/// Stream seed for the paths started at `(t, x)`, shared by every solver
/// that evaluates at that point.
pub(crate) fn point_seed(seed: u64, t: f64, x: &[f64]) -> u64 {
    let mut p = Vec::with_capacity(x.len() + 1);
    p.push(t);
    p.extend_from_slice(x);
    hash_point(seed, &p)
}

/// `u(t, x) = E[u_T(X^{t,x}_T) exp{int_t^T eta(dr, X_r)}]` by Monte Carlo,
/// with the Young integral as a left-point sum on the simulation grid.
pub fn solve_linear_young_pde(
    u_terminal: &(dyn Fn(&[f64]) -> f64 + Sync),
    diffusion: &DiffusionSpec,
    driver: &SpaceTimeDriver,
    points: &[(f64, Vec<f64>)],
    config: &FkConfig,
) -> Result<PdeSolutionTable> {
    if config.samples == 0 || config.steps == 0 {
        return domain("Feynman–Kac needs positive sample and step counts");
    }
    if driver.channels() != 1 {
        return domain("the linear Feynman–Kac formula is implemented for one channel");
    }
    let horizon = driver.horizon();
    let d = diffusion.dim();
    let mut rows = Vec::with_capacity(points.len());
    for (t, x) in points {
        if x.len() != d {
            return domain(format!("evaluation point has {} coordinates, diffusion has {d}", x.len()));
        }
        let grid = grid_from(*t, horizon, config.steps)?;
        let key = path_streams(point_seed(config.seed, *t, x));
        let times = grid.times();
        let vals: Vec<Result<f64>> = par::map_indexed(config.samples, |s| {
            let mut st = Stepper::new(diffusion);
            let mut rng = key.sample(s as u64);
            let mut xs = vec![0.0; times.len() * d];
            st.run(x, times, &mut rng, &mut xs, None)?;
            let e = young_sum_along(driver, times, &xs, d);
            if e > 700.0 {
                return Err(Error::Numerical(format!("Feynman–Kac weight overflow at x = {x:?}")));
            }
            Ok(u_terminal(&xs[(times.len() - 1) * d..]) * e.exp())
        });
        let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
        let m = mean_se(&vals);
        rows.push(PdeRow { t: *t, x: x.clone(), u: m.mean, se: m.se, radius: f64::INFINITY, delta: 0.0, samples: config.samples });
    }
    Ok(PdeSolutionTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{make_separable_driver, Regularity};
    use crate::pde_fk::{fd_oracle, FdSpec};
    use std::sync::Arc;

    fn cfg(samples: usize) -> FkConfig {
        FkConfig { samples, steps: 100, seed: 17 }
    }

    #[test]
    fn heat_semigroup_martingale() {
        let zero = SpaceTimeDriver::zero(1, 1.0);
        let pts = vec![(0.0, vec![0.3]), (0.5, vec![-1.0])];
        let t = solve_linear_young_pde(&|x: &[f64]| x[0], &DiffusionSpec::brownian(1), &zero, &pts, &cfg(20_000)).unwrap();
        for (r, (_, x)) in t.rows.iter().zip(&pts) {
            assert!(r.estimate().within(x[0], 3.0), "{r:?}");
        }
    }

    #[test]
    fn deterministic_exponent() {
        let eta = SpaceTimeDriver::time_only(Arc::new(|t| 0.8 * t), true, 1.0);
        let pts = vec![(0.0, vec![0.0]), (0.25, vec![2.0])];
        let t = solve_linear_young_pde(&|_: &[f64]| 1.0, &DiffusionSpec::brownian(1), &eta, &pts, &cfg(50)).unwrap();
        assert!((t.rows[0].u - 0.8f64.exp()).abs() < 1e-12);
        assert!((t.rows[1].u - (0.8f64 * 0.75).exp()).abs() < 1e-12);
        assert!(t.rows[0].se < 1e-12);
    }

    #[test]
    fn cos_potential_against_crank_nicolson() {
        let eta = make_separable_driver(1, Arc::new(|x: &[f64], o: &mut [f64]| o[0] = x[0].cos()), Arc::new(|t| t), Regularity::lipschitz(), true, 1.0);
        let fd = fd_oracle(&FdSpec::for_points(2.0, 1.0, 1.0, 0.0), &|_, x| x.cos(), &|_| 1.0).unwrap();
        let pts: Vec<(f64, Vec<f64>)> = [-2.0, 0.0, 1.5].iter().map(|x| (0.0, vec![*x])).collect();
        let t = solve_linear_young_pde(&|_: &[f64]| 1.0, &DiffusionSpec::brownian(1), &eta, &pts, &cfg(20_000)).unwrap();
        for r in &t.rows {
            let o = fd.at(r.x[0]);
            assert!(((r.u - o) / o).abs() < 0.05, "{} vs {o}", r.u);
        }
    }

    #[test]
    fn reproducible_per_point() {
        let eta = SpaceTimeDriver::time_only(Arc::new(|t| t), true, 1.0);
        let a = solve_linear_young_pde(&|x: &[f64]| x[0].sin(), &DiffusionSpec::brownian(1), &eta, &[(0.0, vec![0.1]), (0.0, vec![0.2])], &cfg(500)).unwrap();
        let b = par::with_workers(1, || {
            solve_linear_young_pde(&|x: &[f64]| x[0].sin(), &DiffusionSpec::brownian(1), &eta, &[(0.0, vec![0.2])], &cfg(500)).unwrap()
        });
        assert_eq!(a.rows[1], b.rows[0]);
    }
}
