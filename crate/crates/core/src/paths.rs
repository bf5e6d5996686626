//! Time grids, sampled paths and the path seminorms (p-variation, Hölder,
//! uniform).

use crate::error::{domain, Result};

/// Strictly increasing times inside `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        if times.is_empty() {
            return domain("time grid is empty");
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return domain("time grid entries must be finite and nonnegative");
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return domain("time grid must be strictly increasing");
        }
        if *times.last().unwrap() > horizon * (1.0 + 1e-12) {
            return domain("time grid exceeds the horizon");
        }
        Ok(TimeGrid { times, horizon })
    }

    /// `steps + 1` equally spaced points covering `[start, end]`.
    pub fn uniform_between(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(end > start) {
            return domain("uniform grid needs steps >= 1 and end > start");
        }
        let h = (end - start) / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|i| start + h * i as f64).collect();
        times[steps] = end;
        TimeGrid::new(times, end)
    }

    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        Self::uniform_between(0.0, horizon, steps)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.times[0]
    }

    pub fn last(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Index of the grid time nearest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        match self.times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i == self.times.len() => i - 1,
            Err(i) => {
                if t - self.times[i - 1] <= self.times[i] - t {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    /// Inserts a midpoint into every interval.
    pub fn refine(&self) -> TimeGrid {
        let mut times = Vec::with_capacity(2 * self.times.len() - 1);
        for w in self.times.windows(2) {
            times.push(w[0]);
            times.push(0.5 * (w[0] + w[1]));
        }
        times.push(self.last());
        TimeGrid { times, horizon: self.horizon }
    }
}

/// `d`-dimensional values on a time grid, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return domain("path dimension must be positive");
        }
        if values.len() != grid.len() * dim {
            return domain(format!(
                "path has {} values, expected {} points x {} dims",
                values.len(),
                grid.len(),
                dim
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("path values must be finite");
        }
        Ok(SamplePath { grid, dim, values })
    }

    pub fn scalar(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    /// Samples `f(t)` on the grid.
    pub fn from_fn(grid: TimeGrid, dim: usize, f: impl Fn(f64, &mut [f64])) -> Result<Self> {
        let mut values = vec![0.0; grid.len() * dim];
        for (i, &t) in grid.times().iter().enumerate() {
            f(t, &mut values[i * dim..(i + 1) * dim]);
        }
        Self::new(grid, dim, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Piecewise-linear value at time `t` (clamped to the grid range).
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let ts = self.grid.times();
        if t <= ts[0] {
            out.copy_from_slice(self.point(0));
            return;
        }
        let last = ts.len() - 1;
        if t >= ts[last] {
            out.copy_from_slice(self.point(last));
            return;
        }
        let j = ts.partition_point(|&s| s <= t);
        let (a, b) = (ts[j - 1], ts[j]);
        let w = (t - a) / (b - a);
        let (p, q) = (self.point(j - 1), self.point(j));
        for k in 0..self.dim {
            out[k] = p[k] + w * (q[k] - p[k]);
        }
    }

    /// Restriction to `[s, t]`, endpoints snapped to the nearest grid points.
    pub fn restrict(&self, s: f64, t: f64) -> Result<SamplePath> {
        let (i, j) = (self.grid.nearest_index(s), self.grid.nearest_index(t));
        if j <= i {
            return domain("restriction interval collapses to a single grid point");
        }
        let grid = TimeGrid { times: self.grid.times[i..=j].to_vec(), horizon: self.grid.horizon };
        Ok(SamplePath { grid, dim: self.dim, values: self.values[i * self.dim..(j + 1) * self.dim].to_vec() })
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.point(i).iter().zip(self.point(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PVarMode {
    /// Supremum over every sub-partition of the grid.
    Exact,
    /// The full-grid partition only.
    RefinementLimit,
}

/// p-variation of a path over its grid.
///
/// Exact mode runs a dynamic program over end indices: `best[j]` is the
/// largest sum of `|increment|^p` over sub-partitions ending at `j`. Adding
/// the first or last grid point to a partition never lowers the sum, so the
/// supremum is `best[m - 1]`.
pub fn p_variation(path: &SamplePath, p: f64, mode: PVarMode) -> Result<f64> {
    let m = path.len();
    if m < 2 {
        return domain("p-variation needs at least two points");
    }
    if !(p >= 1.0) {
        return domain(format!("p-variation exponent must be >= 1, got {p}"));
    }
    let sum = match mode {
        PVarMode::RefinementLimit => (1..m).map(|j| path.dist(j - 1, j).powf(p)).sum::<f64>(),
        PVarMode::Exact => {
            let mut best = vec![0.0f64; m];
            for j in 1..m {
                let mut b = 0.0f64;
                for i in 0..j {
                    b = b.max(best[i] + path.dist(i, j).powf(p));
                }
                best[j] = b;
            }
            best[m - 1]
        }
    };
    Ok(sum.powf(1.0 / p))
}

/// Largest `|g_j - g_i| / (t_j - t_i)^gamma` over grid pairs.
pub fn holder_norm(path: &SamplePath, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return domain(format!("Hölder exponent must lie in (0, 1], got {gamma}"));
    }
    let m = path.len();
    if m < 2 {
        return domain("Hölder norm needs at least two points");
    }
    let ts = path.grid.times();
    let mut best = 0.0f64;
    for i in 0..m {
        for j in i + 1..m {
            best = best.max(path.dist(i, j) / (ts[j] - ts[i]).powf(gamma));
        }
    }
    Ok(best)
}

/// Largest Euclidean magnitude over the grid.
pub fn uniform_norm(path: &SamplePath) -> Result<f64> {
    if path.is_empty() {
        return domain("uniform norm of an empty path");
    }
    Ok((0..path.len())
        .map(|i| path.point(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max))
}

/// Largest `|g_j - g_i|` over grid pairs.
pub fn oscillation(path: &SamplePath) -> f64 {
    let m = path.len();
    let mut best = 0.0f64;
    for i in 0..m {
        for j in i + 1..m {
            best = best.max(path.dist(i, j));
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormReport {
    pub p_variation: f64,
    pub holder: f64,
    pub uniform: f64,
    pub p: f64,
    pub gamma: f64,
}

pub fn norm_report(path: &SamplePath, p: f64, gamma: f64) -> Result<NormReport> {
    Ok(NormReport {
        p_variation: p_variation(path, p, PVarMode::Exact)?,
        holder: holder_norm(path, gamma)?,
        uniform: uniform_norm(path)?,
        p,
        gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tent() -> SamplePath {
        SamplePath::scalar(TimeGrid::new(vec![0.0, 0.5, 1.0], 1.0).unwrap(), vec![0.0, 1.0, 0.0]).unwrap()
    }

    /// Enumerates every sub-partition containing at least two points.
    fn brute_force(path: &SamplePath, p: f64) -> f64 {
        let m = path.len();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << m) {
            let idx: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
            if idx.len() < 2 {
                continue;
            }
            let s: f64 = idx.windows(2).map(|w| path.dist(w[0], w[1]).powf(p)).sum();
            best = best.max(s);
        }
        best.powf(1.0 / p)
    }

    #[test]
    fn tent_values() {
        assert_eq!(p_variation(&tent(), 1.0, PVarMode::Exact).unwrap(), 2.0);
        assert!((p_variation(&tent(), 2.0, PVarMode::Exact).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((brute_force(&tent(), 2.0) - 1.414_213_56).abs() < 1e-8);
    }

    #[test]
    fn constant_path_has_zero_norms() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        let c = SamplePath::scalar(g, vec![1.5; 3]).unwrap();
        for p in [1.0, 2.0, 3.5] {
            assert_eq!(p_variation(&c, p, PVarMode::Exact).unwrap(), 0.0);
        }
        assert_eq!(holder_norm(&c, 0.5).unwrap(), 0.0);
        assert_eq!(uniform_norm(&c).unwrap(), 1.5);
    }

    #[test]
    fn holder_examples() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let lin = SamplePath::from_fn(g, 1, |t, o| o[0] = t).unwrap();
        assert!((holder_norm(&lin, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let short = SamplePath::scalar(TimeGrid::new(vec![0.0, 0.25], 1.0).unwrap(), vec![0.0, 1.0]).unwrap();
        assert!((holder_norm(&short, 0.5).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_examples() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        assert_eq!(uniform_norm(&SamplePath::scalar(g, vec![0.0, -3.0, 2.0]).unwrap()).unwrap(), 3.0);
        let g1 = TimeGrid::new(vec![0.0], 1.0).unwrap();
        assert_eq!(uniform_norm(&SamplePath::new(g1, 2, vec![3.0, 4.0]).unwrap()).unwrap(), 5.0);
    }

    #[test]
    fn errors() {
        let one = SamplePath::scalar(TimeGrid::new(vec![0.0], 1.0).unwrap(), vec![1.0]).unwrap();
        assert!(p_variation(&one, 1.0, PVarMode::Exact).is_err());
        assert!(p_variation(&tent(), 0.5, PVarMode::Exact).is_err());
        assert!(holder_norm(&tent(), 0.0).is_err());
        assert!(holder_norm(&tent(), 1.5).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.0], 1.0).is_err());
        assert!(TimeGrid::new(vec![0.0, 2.0], 1.0).is_err());
        assert!(SamplePath::scalar(TimeGrid::uniform(1.0, 1).unwrap(), vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn refinement_limit_is_full_partition() {
        let g = TimeGrid::uniform(1.0, 3).unwrap();
        let path = SamplePath::scalar(g, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((p_variation(&path, 2.0, PVarMode::RefinementLimit).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        // Monotone path: coarsest partition wins for p > 1.
        assert!((p_variation(&path, 2.0, PVarMode::Exact).unwrap() - 3.0).abs() < 1e-15);
    }

    fn arb_path(max_len: usize) -> impl Strategy<Value = SamplePath> {
        (2..=max_len, 1usize..=2).prop_flat_map(|(m, d)| {
            prop::collection::vec(-3.0f64..3.0, m * d).prop_map(move |v| {
                SamplePath::new(TimeGrid::uniform(1.0, m - 1).unwrap(), d, v).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn dp_matches_enumeration(path in arb_path(10), p in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0])) {
            let dp = p_variation(&path, p, PVarMode::Exact).unwrap();
            let bf = brute_force(&path, p);
            prop_assert!((dp - bf).abs() <= 1e-12 * bf.max(1.0));
        }

        #[test]
        fn nonincreasing_in_p(path in arb_path(9)) {
            let mut prev = f64::INFINITY;
            for p in [1.0, 1.25, 1.5, 2.0, 3.0, 5.0] {
                let v = p_variation(&path, p, PVarMode::Exact).unwrap();
                prop_assert!(v <= prev * (1.0 + 1e-12));
                prev = v;
            }
        }

        #[test]
        fn superadditive(path in arb_path(11), p in 1.0f64..4.0) {
            let m = path.len();
            prop_assume!(m >= 3);
            let ts = path.grid().times().to_vec();
            let b = ts[m / 2];
            let left = path.restrict(ts[0], b).unwrap();
            let right = path.restrict(b, ts[m - 1]).unwrap();
            let l = p_variation(&left, p, PVarMode::Exact).unwrap().powf(p);
            let r = p_variation(&right, p, PVarMode::Exact).unwrap().powf(p);
            let all = p_variation(&path, p, PVarMode::Exact).unwrap().powf(p);
            prop_assert!(l + r <= all * (1.0 + 1e-10) + 1e-12);
        }

        #[test]
        fn holder_dominates_oscillation(path in arb_path(10), gamma in 0.05f64..1.0) {
            let span = path.grid().last() - path.grid().first();
            let h = holder_norm(&path, gamma).unwrap();
            prop_assert!(h * span.powf(gamma) >= oscillation(&path) * (1.0 - 1e-12));
        }
    }
}
