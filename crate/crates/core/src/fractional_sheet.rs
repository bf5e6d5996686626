//! Fractional Brownian sheet: exact covariance, dense Cholesky sampling on a
//! tensor grid, and the Hurst-parameter admissibility region.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::drivers::{grid_driver, GridField, Regularity, SpaceTimeDriver};
use crate::error::{domain, Error, Result};
use crate::par;
use crate::rng::StreamKey;

pub const DEFAULT_CHOLESKY_LIMIT: usize = 4096;

/// Relative jitter levels tried in order (multiples of trace / size).
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

#[derive(Clone, Debug, PartialEq)]
pub struct SheetSpec {
    /// Hurst exponent in time.
    pub h0: f64,
    /// Hurst exponents per spatial axis.
    pub h: Vec<f64>,
    pub times: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
    pub horizon: f64,
    pub cholesky_limit: usize,
}

impl SheetSpec {
    pub fn new(h0: f64, h: Vec<f64>, times: Vec<f64>, axes: Vec<Vec<f64>>, horizon: f64) -> Result<Self> {
        let spec = SheetSpec { h0, h, times, axes, horizon, cholesky_limit: DEFAULT_CHOLESKY_LIMIT };
        spec.validate()?;
        Ok(spec)
    }

    /// Uniform grid: `nt` times in `(0, horizon]` plus `t = 0`, and `nx`
    /// points per axis on `[-x_max, x_max]`.
    pub fn uniform(h0: f64, h: Vec<f64>, horizon: f64, nt: usize, x_max: f64, nx: usize) -> Result<Self> {
        let times: Vec<f64> = (0..=nt).map(|i| horizon * i as f64 / nt.max(1) as f64).collect();
        let axis: Vec<f64> = if nx == 1 {
            vec![0.0]
        } else {
            (0..nx).map(|j| -x_max + 2.0 * x_max * j as f64 / (nx - 1) as f64).collect()
        };
        let axes = vec![axis; h.len()];
        Self::new(h0, h, times, axes, horizon)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.h0) || self.h.is_empty() || !self.h.iter().all(|v| in_unit(*v)) {
            return domain("Hurst parameters must lie strictly inside (0, 1)");
        }
        if self.h.len() != self.axes.len() {
            return domain("one spatial Hurst exponent per axis is required");
        }
        let inc = |a: &[f64]| !a.is_empty() && a.windows(2).all(|w| w[1] > w[0]);
        if !inc(&self.times) || !self.axes.iter().all(|a| inc(a)) {
            return domain("sheet grid axes must be nonempty and strictly increasing");
        }
        if self.times[0] < 0.0 || *self.times.last().unwrap() > self.horizon {
            return domain("sheet times must lie in [0, horizon]");
        }
        if self.grid_size() > self.cholesky_limit {
            return Err(Error::Resource(format!(
                "sheet grid has {} nodes, limit is {}",
                self.grid_size(),
                self.cholesky_limit
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn space_len(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn grid_size(&self) -> usize {
        self.times.len() * self.space_len()
    }

    pub fn space_point(&self, mut j: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            p[k] = a[j % a.len()];
            j /= a.len();
        }
        p
    }

    /// `(t, x)` of flat node `k` (time-major).
    pub fn node(&self, k: usize) -> (f64, Vec<f64>) {
        let s = self.space_len();
        (self.times[k / s], self.space_point(k % s))
    }

    /// Conservative regularity attached to sampled realizations:
    /// `tau = H0 - 0.01`, `lambda = min H - 0.01`, `beta = sum H - lambda`.
    pub fn declared_regularity(&self) -> Regularity {
        let tau = (self.h0 - 0.01).max(1e-3);
        let lambda = (self.h.iter().cloned().fold(1.0, f64::min) - 0.01).max(1e-3);
        let beta = (self.h.iter().sum::<f64>() - lambda).max(0.0);
        Regularity { tau, lambda, beta }
    }
}

/// `E[B(t,x) B(s,y)]`.
pub fn sheet_covariance(spec: &SheetSpec, t: f64, x: &[f64], s: f64, y: &[f64]) -> f64 {
    let fbm = |a: f64, b: f64, hh: f64| {
        let e = 2.0 * hh;
        a.abs().powf(e) + b.abs().powf(e) - (a - b).abs().powf(e)
    };
    let n = spec.h.len();
    let mut c = fbm(t, s, spec.h0) / 2f64.powi(n as i32 + 1);
    for i in 0..n {
        c *= fbm(x[i], y[i], spec.h[i]);
    }
    c
}

/// Cholesky factor of the sheet covariance over the nodes with nonzero
/// variance. Nodes at `t = 0` or on a coordinate hyperplane are identically
/// zero and are excluded from the factorization.
#[derive(Clone, Debug)]
pub struct SheetSampler {
    spec: SheetSpec,
    active: Vec<usize>,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl SheetSampler {
    /// Factorizes with jitter escalation starting at `initial_jitter`
    /// (relative to `trace / size`).
    pub fn new(spec: SheetSpec, initial_jitter: f64) -> Result<Self> {
        spec.validate()?;
        if !(initial_jitter >= 0.0) {
            return domain("jitter must be nonnegative");
        }
        let nodes: Vec<(f64, Vec<f64>)> = (0..spec.grid_size()).map(|k| spec.node(k)).collect();
        let active: Vec<usize> = (0..nodes.len())
            .filter(|&k| sheet_covariance(&spec, nodes[k].0, &nodes[k].1, nodes[k].0, &nodes[k].1) > 0.0)
            .collect();
        let m = active.len();
        if m == 0 {
            return Ok(SheetSampler { spec, active, factor: DMatrix::zeros(0, 0), jitter: 0.0 });
        }
        let cov = DMatrix::from_fn(m, m, |a, b| {
            let (ta, xa) = &nodes[active[a]];
            let (tb, xb) = &nodes[active[b]];
            sheet_covariance(&spec, *ta, xa, *tb, xb)
        });
        let scale = cov.trace() / m as f64;
        let ladder = std::iter::once(initial_jitter).chain(JITTER_LADDER.iter().copied().filter(|j| *j > initial_jitter));
        for level in ladder {
            let mut c = cov.clone();
            for i in 0..m {
                c[(i, i)] += level * scale;
            }
            if let Some(ch) = c.cholesky() {
                return Ok(SheetSampler { spec, active, factor: ch.l(), jitter: level });
            }
        }
        let min_eig = SymmetricEigen::new(cov).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        Err(Error::Numerical(format!(
            "sheet covariance Cholesky failed up to jitter 1e-8; smallest eigenvalue estimate {min_eig:e}"
        )))
    }

    pub fn spec(&self) -> &SheetSpec {
        &self.spec
    }

    /// Relative jitter that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn active_nodes(&self) -> &[usize] {
        &self.active
    }

    /// One realization on the full grid (time-major), from stream `index`.
    pub fn sample_values(&self, key: StreamKey, index: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.grid_size()];
        let m = self.active.len();
        if m == 0 {
            return out;
        }
        let mut rng = key.sample(index);
        let z = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(&mut rng)));
        let v = &self.factor * z;
        for (a, &k) in self.active.iter().enumerate() {
            out[k] = v[a];
        }
        out
    }

    /// `count` independent realizations, streams `0..count`.
    pub fn sample_batch(&self, key: StreamKey, count: usize) -> Vec<Vec<f64>> {
        par::map_indexed(count, |i| self.sample_values(key, i as u64))
    }

    /// A realization as a driver, interpolated multilinearly between nodes.
    pub fn sample_driver(&self, key: StreamKey, index: u64) -> Result<SpaceTimeDriver> {
        let vals = self.sample_values(key, index);
        let s = self.spec.space_len();
        let (mut times, mut values) = (self.spec.times.clone(), vals);
        if times[0] > 0.0 {
            times.insert(0, 0.0);
            let mut padded = vec![0.0; s];
            padded.extend(values);
            values = padded;
        }
        let field = GridField::new(times, self.spec.axes.clone(), values)?;
        grid_driver(field, self.spec.declared_regularity(), self.spec.horizon)
    }
}

/// Draws one sheet realization as a driver.
pub fn sample_sheet(spec: &SheetSpec, seed: u64, jitter: f64) -> Result<SpaceTimeDriver> {
    SheetSampler::new(spec.clone(), jitter)?.sample_driver(StreamKey::new(seed), 0)
}

/// `H0 + H/2 > 1` and `d H < 2 H0 - 1`.
pub fn hurst_admissible(h0: f64, h: f64, d: usize) -> bool {
    h0 + h / 2.0 > 1.0 && d as f64 * h < 2.0 * h0 - 1.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HurstPoint {
    pub h: f64,
    pub h0: f64,
    pub admissible: bool,
}

/// Cell-centred values `(k + 1/2) / resolution` for `k = 0..resolution`.
pub fn hurst_axis(resolution: usize) -> Vec<f64> {
    (0..resolution).map(|k| (k as f64 + 0.5) / resolution as f64).collect()
}

/// Admissibility over the `(H, H0)` unit square, `H0` outer and `H` inner.
pub fn hurst_region_grid(d: usize, resolution: usize) -> Result<Vec<HurstPoint>> {
    if resolution < 2 {
        return domain("Hurst region resolution must be at least 2");
    }
    if d == 0 {
        return domain("spatial dimension must be at least 1");
    }
    let axis = hurst_axis(resolution);
    Ok(axis
        .iter()
        .flat_map(|&h0| axis.iter().map(move |&h| HurstPoint { h, h0, admissible: hurst_admissible(h0, h, d) }))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(h0: f64, h: f64, nt: usize, nx: usize) -> SheetSpec {
        SheetSpec::uniform(h0, vec![h], 1.0, nt, 2.0, nx).unwrap()
    }

    #[test]
    fn covariance_examples() {
        let s = spec(0.5, 0.5, 2, 3);
        assert_eq!(sheet_covariance(&s, 1.0, &[1.0], 1.0, &[1.0]), 1.0);
        assert_eq!(sheet_covariance(&s, 0.0, &[0.7], 0.4, &[1.2]), 0.0);
        assert_eq!(sheet_covariance(&s, 0.6, &[0.0], 0.4, &[1.2]), 0.0);
        let a = sheet_covariance(&s, 0.3, &[0.5], 0.9, &[-1.5]);
        let b = sheet_covariance(&s, 0.9, &[-1.5], 0.3, &[0.5]);
        assert_eq!(a, b);
    }

    #[test]
    fn variance_scales_like_t_to_2h0() {
        let s = spec(0.7, 0.6, 2, 3);
        let v = |t: f64| sheet_covariance(&s, t, &[1.3], t, &[1.3]);
        assert!((v(0.8) / v(0.4) - 2f64.powf(1.4)).abs() < 1e-12);
    }

    #[test]
    fn hurst_examples() {
        assert!(hurst_admissible(0.9, 0.5, 1));
        assert!(!hurst_admissible(0.6, 0.9, 1));
        assert!(!hurst_admissible(0.75, 0.5, 1));
    }

    #[test]
    fn region_grid_consistency() {
        assert!(hurst_region_grid(1, 1).is_err());
        let g = hurst_region_grid(1, 3).unwrap();
        assert_eq!(g.len(), 9);
        for p in &g {
            assert_eq!(p.admissible, hurst_admissible(p.h0, p.h, 1));
        }
        let g1 = hurst_region_grid(1, 101).unwrap();
        let g2 = hurst_region_grid(2, 101).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            if a.h0 <= 0.75 {
                assert!(!a.admissible);
            }
            assert!(!b.admissible || a.admissible);
        }
        assert!(g1.iter().any(|p| p.admissible));
    }

    #[test]
    fn degenerate_grid_samples_zero() {
        let s = SheetSpec::new(0.7, vec![0.7], vec![0.0], vec![vec![-1.0, 1.0]], 1.0).unwrap();
        let sm = SheetSampler::new(s, 0.0).unwrap();
        assert!(sm.sample_values(StreamKey::new(3), 0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn replay_is_bit_identical() {
        let sm = SheetSampler::new(spec(0.75, 0.75, 4, 5), 0.0).unwrap();
        let k = StreamKey::new(11);
        assert_eq!(sm.sample_values(k, 7), sm.sample_values(k, 7));
        assert_ne!(sm.sample_values(k, 7), sm.sample_values(k, 8));
        let d = sample_sheet(sm.spec(), 5, 0.0).unwrap();
        assert_eq!(d.eval_scalar(0.0, &[1.0]), 0.0);
        assert_eq!(d.eval_scalar(0.5, &[0.3]), sample_sheet(sm.spec(), 5, 0.0).unwrap().eval_scalar(0.5, &[0.3]));
    }

    #[test]
    fn cholesky_with_small_jitter_on_large_grids() {
        for (h0, h) in [(0.55, 0.55), (0.95, 0.95), (0.75, 0.6)] {
            let s = SheetSpec::uniform(h0, vec![h], 1.0, 31, 2.0, 33).unwrap();
            let sm = SheetSampler::new(s, 0.0).unwrap();
            assert!(sm.jitter() <= 1e-10, "H0={h0} H={h} jitter {}", sm.jitter());
        }
    }

    #[test]
    fn oversize_grid_is_a_resource_error() {
        let e = SheetSpec::uniform(0.7, vec![0.7], 1.0, 100, 1.0, 100).unwrap_err();
        assert!(matches!(e, Error::Resource(_)));
    }
}
