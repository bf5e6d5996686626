//! Space-time drivers `eta(t, x)`.
//!
//! A [`SpaceTimeDriver`] wraps an evaluable field together with its declared
//! regularity `(tau, lambda, beta)`. Every constructor normalizes the field so
//! that `eta(0, x) = 0`; increments `eta(t, x) - eta(s, x)` are unaffected by
//! the normalization and are evaluated on the raw field.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;

use crate::csvfmt::fmt_f64;
use crate::error::{domain, Error, Result};
use crate::rng::StreamKey;

/// A raw field `(t, x) -> R^M`.
pub trait Field: Send + Sync {
    fn channels(&self) -> usize;
    fn eval_raw(&self, t: f64, x: &[f64], out: &mut [f64]);
}

/// Declared (not inferred) regularity of a driver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularity {
    pub tau: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl Regularity {
    pub fn new(tau: f64, lambda: f64, beta: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) || !(lambda > 0.0 && lambda <= 1.0) || !(beta >= 0.0) {
            return domain(format!("regularity needs tau, lambda in (0,1] and beta >= 0, got ({tau}, {lambda}, {beta})"));
        }
        Ok(Regularity { tau, lambda, beta })
    }

    /// Smooth in time and Lipschitz in space with no growth weight.
    pub fn lipschitz() -> Self {
        Regularity { tau: 1.0, lambda: 1.0, beta: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriverKind {
    AnalyticSeparable,
    Mollified,
    SampledSheet,
    Custom,
}

#[derive(Clone)]
pub struct SpaceTimeDriver {
    field: Arc<dyn Field>,
    regularity: Regularity,
    kind: DriverKind,
    smooth_in_time: bool,
    recenter: bool,
    horizon: f64,
}

impl fmt::Debug for SpaceTimeDriver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpaceTimeDriver")
            .field("channels", &self.channels())
            .field("kind", &self.kind)
            .field("regularity", &self.regularity)
            .field("smooth_in_time", &self.smooth_in_time)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl SpaceTimeDriver {
    /// Wraps an arbitrary field; `eta(0, .)` is subtracted on evaluation.
    pub fn custom(
        field: Arc<dyn Field>,
        regularity: Regularity,
        smooth_in_time: bool,
        horizon: f64,
    ) -> Self {
        SpaceTimeDriver { field, regularity, kind: DriverKind::Custom, smooth_in_time, recenter: true, horizon }
    }

    /// A field that already vanishes at `t = 0`.
    pub(crate) fn from_normalized(
        field: Arc<dyn Field>,
        regularity: Regularity,
        kind: DriverKind,
        smooth_in_time: bool,
        horizon: f64,
    ) -> Self {
        SpaceTimeDriver { field, regularity, kind, smooth_in_time, recenter: false, horizon }
    }

    pub fn zero(channels: usize, horizon: f64) -> Self {
        make_separable_driver(
            channels,
            Arc::new(move |_x: &[f64], out: &mut [f64]| out.iter_mut().for_each(|o| *o = 1.0)),
            Arc::new(|_t| 0.0),
            Regularity::lipschitz(),
            true,
            horizon,
        )
    }

    /// `eta(t, x) = a(t)`, one channel.
    pub fn time_only(a: Arc<dyn Fn(f64) -> f64 + Send + Sync>, smooth: bool, horizon: f64) -> Self {
        make_separable_driver(1, Arc::new(|_x: &[f64], out: &mut [f64]| out[0] = 1.0), a, Regularity::lipschitz(), smooth, horizon)
    }

    pub fn channels(&self) -> usize {
        self.field.channels()
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn kind(&self) -> DriverKind {
        self.kind
    }

    pub fn smooth_in_time(&self) -> bool {
        self.smooth_in_time
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn with_regularity(mut self, regularity: Regularity) -> Self {
        self.regularity = regularity;
        self
    }

    pub fn field(&self) -> &Arc<dyn Field> {
        &self.field
    }

    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.field.eval_raw(t, x, out);
        if self.recenter {
            let mut base = vec![0.0; out.len()];
            self.field.eval_raw(0.0, x, &mut base);
            out.iter_mut().zip(&base).for_each(|(o, b)| *o -= b);
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.channels()];
        self.eval_into(t, x, &mut out);
        out
    }

    /// First channel of `eta(t, x)`.
    pub fn eval_scalar(&self, t: f64, x: &[f64]) -> f64 {
        self.eval(t, x)[0]
    }

    /// `eta(t, x) - eta(s, x)` per channel, written into `out`. `scratch`
    /// must have the same length as `out`.
    #[inline]
    pub fn increment_into(&self, s: f64, t: f64, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.field.eval_raw(t, x, out);
        self.field.eval_raw(s, x, scratch);
        out.iter_mut().zip(scratch.iter()).for_each(|(o, b)| *o -= b);
    }

    /// Increment of a single-channel driver.
    #[inline]
    pub fn increment1(&self, s: f64, t: f64, x: &[f64]) -> f64 {
        let (mut a, mut b) = ([0.0f64; 1], [0.0f64; 1]);
        self.field.eval_raw(t, x, &mut a);
        self.field.eval_raw(s, x, &mut b);
        a[0] - b[0]
    }
}

pub type SpaceFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

struct Separable {
    channels: usize,
    v: SpaceFn,
    a: TimeFn,
    a0: f64,
}

impl Field for Separable {
    fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    fn eval_raw(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.v)(x, out);
        let at = (self.a)(t) - self.a0;
        out.iter_mut().for_each(|o| *o *= at);
    }
}

/// `eta(t, x) = v(x) * (a(t) - a(0))`.
pub fn make_separable_driver(
    channels: usize,
    v: SpaceFn,
    a: TimeFn,
    regularity: Regularity,
    smooth_in_time: bool,
    horizon: f64,
) -> SpaceTimeDriver {
    let a0 = a(0.0);
    SpaceTimeDriver::from_normalized(
        Arc::new(Separable { channels, v, a, a0 }),
        regularity,
        DriverKind::AnalyticSeparable,
        smooth_in_time,
        horizon,
    )
}

/// The standard bump `exp(-1 / (1 - u^2))` on `(-1, 1)`, unnormalized.
pub fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

/// Composite Simpson nodes and weights on `[-1, 1]`; `points` must be odd.
fn simpson(points: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 / (points - 1) as f64;
    let nodes: Vec<f64> = (0..points).map(|i| -1.0 + h * i as f64).collect();
    let weights = (0..points)
        .map(|i| {
            let c = if i == 0 || i == points - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    (nodes, weights)
}

/// Normalizing constant `c` of the bump, by 129-point Simpson quadrature.
pub fn bump_normalization() -> f64 {
    let (nodes, weights) = simpson(129);
    1.0 / nodes.iter().zip(&weights).map(|(u, w)| w * bump(*u)).sum::<f64>()
}

struct Mollified {
    base: SpaceTimeDriver,
    delta: f64,
    offsets: Vec<f64>,
    weights: Vec<f64>,
    horizon: f64,
}

impl Mollified {
    /// Odd reflection through the endpoint values at 0 and the horizon.
    fn reflected(&self, s: f64, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let t_max = self.horizon;
        if s < 0.0 {
            self.base.eval_into(0.0, x, scratch);
            self.base.eval_into(-s, x, out);
            out.iter_mut().zip(scratch.iter()).for_each(|(o, a)| *o = 2.0 * a - *o);
        } else if s > t_max {
            self.base.eval_into(t_max, x, scratch);
            self.base.eval_into(2.0 * t_max - s, x, out);
            out.iter_mut().zip(scratch.iter()).for_each(|(o, a)| *o = 2.0 * a - *o);
        } else {
            self.base.eval_into(s, x, out);
        }
    }
}

impl Field for Mollified {
    fn channels(&self) -> usize {
        self.base.channels()
    }

    fn eval_raw(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let m = out.len();
        let mut val = vec![0.0; m];
        let mut scratch = vec![0.0; m];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (u, w) in self.offsets.iter().zip(&self.weights) {
            self.reflected(t + self.delta * u, x, &mut val, &mut scratch);
            out.iter_mut().zip(&val).for_each(|(o, v)| *o += w * v);
        }
    }
}

/// Time mollification `eta^delta(t, x) = sum_i w_i rho_delta(t - s_i) eta(s_i, x)`.
///
/// The kernel is the standard bump scaled to `(-delta, delta)`; the quadrature
/// is composite Simpson with `points` nodes (odd, at least 3) and the weights
/// are renormalized to unit mass. Outside `[0, T]` the driver is extended by
/// odd reflection through its endpoint values, which keeps `eta^delta(0, .)
/// = 0` and reproduces drivers that are affine in time.
pub fn mollify_time(driver: &SpaceTimeDriver, delta: f64, points: usize) -> Result<SpaceTimeDriver> {
    let horizon = driver.horizon();
    if !(delta > 0.0) {
        return domain(format!("mollification width must be positive, got {delta}"));
    }
    if delta >= horizon {
        return domain(format!("mollification width {delta} must be smaller than the horizon {horizon}"));
    }
    if points < 3 || points % 2 == 0 {
        return domain(format!("quadrature needs an odd number of points >= 3, got {points}"));
    }
    let (nodes, sw) = simpson(points);
    let raw: Vec<f64> = nodes.iter().zip(&sw).map(|(u, w)| w * bump(*u)).collect();
    let mass: f64 = raw.iter().sum();
    let (offsets, weights): (Vec<f64>, Vec<f64>) = nodes
        .iter()
        .zip(&raw)
        .filter(|(_, w)| **w > 0.0)
        .map(|(u, w)| (*u, w / mass))
        .unzip();
    let field = Mollified { base: driver.clone(), delta, offsets, weights, horizon };
    let mut out = SpaceTimeDriver::from_normalized(
        Arc::new(field),
        driver.regularity(),
        DriverKind::Mollified,
        true,
        horizon,
    );
    // Normalization already holds up to rounding for normalized bases; keep
    // the exact subtraction for fields that only vanish approximately.
    out.recenter = true;
    Ok(out)
}

/// Grid estimate of the driver seminorms. Always a lower bound.
#[derive(Clone, Debug, PartialEq)]
pub struct SeminormEstimate {
    /// Estimate of the weighted seminorm `||eta||_{tau,lambda;beta}`.
    pub tau_lambda_beta: f64,
    /// Estimate of `||eta||_{tau,lambda}`.
    pub tau_lambda: f64,
    /// Weighted (rectangular, time, space) quotient maxima.
    pub weighted_parts: [f64; 3],
    pub unweighted_parts: [f64; 3],
    pub time_points: usize,
    pub space_points: usize,
    pub pairs_sampled: usize,
}

pub const DEFAULT_PAIR_BUDGET: usize = 1_000_000;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Maximizes the three quotient families of the seminorm definition over
/// grid pairs. Rectangular pairs beyond `pair_budget` are subsampled
/// uniformly with a fixed stream.
pub fn estimate_seminorm(
    driver: &SpaceTimeDriver,
    times: &[f64],
    space: &[Vec<f64>],
    beta: f64,
    tau: f64,
    lambda: f64,
    pair_budget: usize,
) -> Result<SeminormEstimate> {
    if times.len() < 2 || space.len() < 2 {
        return domain("seminorm estimate needs at least two time and two space points");
    }
    if !(tau > 0.0 && tau <= 1.0) || !(lambda > 0.0 && lambda <= 1.0) || !(beta >= 0.0) {
        return domain("seminorm estimate needs tau, lambda in (0,1] and beta >= 0");
    }
    let (nt, nx, m) = (times.len(), space.len(), driver.channels());
    let mut vals = vec![0.0; nt * nx * m];
    for (i, &t) in times.iter().enumerate() {
        for (j, x) in space.iter().enumerate() {
            driver.eval_into(t, x, &mut vals[(i * nx + j) * m..(i * nx + j + 1) * m]);
        }
    }
    let at = |i: usize, j: usize| &vals[(i * nx + j) * m..(i * nx + j + 1) * m];
    let xnorm: Vec<f64> = space.iter().map(|x| norm(x)).collect();
    let mut diff = vec![0.0; m];

    let mut w = [0.0f64; 3];
    let mut u = [0.0f64; 3];

    // Time quotients.
    for i in 0..nt {
        for k in i + 1..nt {
            let dt = (times[k] - times[i]).abs().powf(tau);
            for j in 0..nx {
                diff.iter_mut().enumerate().for_each(|(c, d)| *d = at(k, j)[c] - at(i, j)[c]);
                let q = norm(&diff) / dt;
                u[1] = u[1].max(q);
                w[1] = w[1].max(q / (1.0 + xnorm[j].powf(beta + lambda)));
            }
        }
    }
    // Space quotients.
    let mut space_pairs = Vec::with_capacity(nx * (nx - 1) / 2);
    for j in 0..nx {
        for l in j + 1..nx {
            let dx: Vec<f64> = space[j].iter().zip(&space[l]).map(|(a, b)| a - b).collect();
            let dxn = norm(&dx);
            if dxn > 0.0 {
                space_pairs.push((j, l, dxn.powf(lambda), 1.0 + xnorm[j].powf(beta) + xnorm[l].powf(beta)));
            }
        }
    }
    for i in 0..nt {
        for &(j, l, dl, wt) in &space_pairs {
            diff.iter_mut().enumerate().for_each(|(c, d)| *d = at(i, l)[c] - at(i, j)[c]);
            let q = norm(&diff) / dl;
            u[2] = u[2].max(q);
            w[2] = w[2].max(q / wt);
        }
    }
    // Rectangular quotients.
    let time_pairs: Vec<(usize, usize)> = (0..nt).flat_map(|i| (i + 1..nt).map(move |k| (i, k))).collect();
    let total = time_pairs.len() * space_pairs.len();
    let mut rect = |i: usize, k: usize, sp: &(usize, usize, f64, f64)| {
        let (j, l, dl, wt) = *sp;
        diff.iter_mut()
            .enumerate()
            .for_each(|(c, d)| *d = at(i, j)[c] - at(k, j)[c] - at(i, l)[c] + at(k, l)[c]);
        let q = norm(&diff) / ((times[k] - times[i]).abs().powf(tau) * dl);
        u[0] = u[0].max(q);
        w[0] = w[0].max(q / wt);
    };
    let sampled = if total <= pair_budget {
        for &(i, k) in &time_pairs {
            for sp in &space_pairs {
                rect(i, k, sp);
            }
        }
        total
    } else {
        let mut rng = StreamKey::new(0x5e_11_10_12).sample(0);
        for _ in 0..pair_budget {
            let (i, k) = time_pairs[rng.random_range(0..time_pairs.len())];
            let sp = space_pairs[rng.random_range(0..space_pairs.len())];
            rect(i, k, &sp);
        }
        pair_budget
    };
    Ok(SeminormEstimate {
        tau_lambda_beta: w.iter().sum(),
        tau_lambda: u.iter().sum(),
        weighted_parts: w,
        unweighted_parts: u,
        time_points: nt,
        space_points: nx,
        pairs_sampled: sampled,
    })
}

/// Scalar field stored on a tensor grid, interpolated multilinearly in
/// `(t, x_1, ..., x_n)` and clamped outside the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    times: Vec<f64>,
    axes: Vec<Vec<f64>>,
    /// Time-major; space flattened with the last axis fastest.
    values: Vec<f64>,
}

fn bracket(grid: &[f64], v: f64) -> (usize, f64) {
    let n = grid.len();
    if n == 1 || v <= grid[0] {
        return (0, 0.0);
    }
    if v >= grid[n - 1] {
        return (n - 2, 1.0);
    }
    let j = grid.partition_point(|&g| g <= v);
    (j - 1, (v - grid[j - 1]) / (grid[j] - grid[j - 1]))
}

impl GridField {
    pub fn new(times: Vec<f64>, axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let ok_axis = |a: &[f64]| !a.is_empty() && a.windows(2).all(|w| w[1] > w[0]);
        if !ok_axis(&times) || axes.is_empty() || !axes.iter().all(|a| ok_axis(a)) {
            return domain("grid field needs nonempty strictly increasing axes");
        }
        let space: usize = axes.iter().map(|a| a.len()).product();
        if values.len() != times.len() * space {
            return domain(format!("grid field has {} values, expected {}", values.len(), times.len() * space));
        }
        Ok(GridField { times, axes, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn space_len(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    /// Space point with flat index `j`.
    pub fn space_point(&self, mut j: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            p[k] = a[j % a.len()];
            j /= a.len();
        }
        p
    }

    pub fn at_node(&self, ti: usize, j: usize) -> f64 {
        self.values[ti * self.space_len() + j]
    }

    fn interpolate(&self, t: f64, x: &[f64]) -> f64 {
        let n = self.axes.len();
        let (ti, tw) = bracket(&self.times, t);
        let br: Vec<(usize, f64)> = self.axes.iter().zip(x).map(|(a, v)| bracket(a, *v)).collect();
        let space = self.space_len();
        let mut acc = 0.0;
        for corner in 0..(1usize << (n + 1)) {
            let mut weight = if corner & 1 == 1 { tw } else { 1.0 - tw };
            if weight == 0.0 {
                continue;
            }
            let tk = (ti + (corner & 1)).min(self.times.len() - 1);
            let mut flat = 0usize;
            for (k, a) in self.axes.iter().enumerate() {
                let hi = (corner >> (k + 1)) & 1;
                let (j, w) = br[k];
                weight *= if hi == 1 { w } else { 1.0 - w };
                flat = flat * a.len() + (j + hi).min(a.len() - 1);
            }
            if weight != 0.0 {
                acc += weight * self.values[tk * space + flat];
            }
        }
        acc
    }

    /// Writes the matrix: a header `t,<space point>,...` with coordinates
    /// joined by `;`, then one row per time.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let space = self.space_len();
        let mut header = vec!["t".to_string()];
        for j in 0..space {
            let p: Vec<String> = self.space_point(j).into_iter().map(fmt_f64).collect();
            header.push(p.join(";"));
        }
        writeln!(w, "{}", header.join(","))?;
        for (i, &t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_f64(t)];
            row.extend(self.values[i * space..(i + 1) * space].iter().map(|v| fmt_f64(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty driver CSV".into()))??;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.len() < 2 || cols[0] != "t" {
            return Err(Error::Parse("driver CSV header must start with `t`".into()));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        let points: Vec<Vec<f64>> = cols[1..]
            .iter()
            .map(|c| c.split(';').map(parse).collect::<Result<Vec<f64>>>())
            .collect::<Result<_>>()?;
        let n = points[0].len();
        if points.iter().any(|p| p.len() != n) {
            return Err(Error::Parse("inconsistent space dimension in header".into()));
        }
        let mut axes = Vec::with_capacity(n);
        for k in 0..n {
            let mut a: Vec<f64> = points.iter().map(|p| p[k]).collect();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            a.dedup();
            axes.push(a);
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != cols.len() {
                return Err(Error::Parse("row length differs from header".into()));
            }
            times.push(parse(cells[0])?);
            for c in &cells[1..] {
                values.push(parse(c)?);
            }
        }
        let field = GridField::new(times, axes, values)?;
        if field.space_len() != points.len()
            || points.iter().enumerate().any(|(j, p)| field.space_point(j) != *p)
        {
            return Err(Error::Parse("header space points are not a tensor grid in row-major order".into()));
        }
        Ok(field)
    }
}

impl Field for GridField {
    fn channels(&self) -> usize {
        1
    }

    fn eval_raw(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.interpolate(t, x);
    }
}

/// Wraps a grid field as a driver. The first time row must be zero.
pub fn grid_driver(field: GridField, regularity: Regularity, horizon: f64) -> Result<SpaceTimeDriver> {
    if field.times[0] != 0.0 || field.values[..field.space_len()].iter().any(|v| *v != 0.0) {
        return domain("sampled driver must start at t = 0 with a zero row");
    }
    Ok(SpaceTimeDriver::from_normalized(Arc::new(field), regularity, DriverKind::SampledSheet, false, horizon))
}

/// Loads a sampled-sheet driver from the CSV matrix format.
pub fn load_grid_driver<R: BufRead>(r: R, regularity: Regularity, horizon: f64) -> Result<SpaceTimeDriver> {
    grid_driver(GridField::read_csv(r)?, regularity, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin_t() -> SpaceTimeDriver {
        SpaceTimeDriver::time_only(Arc::new(|t| t), true, 1.0)
    }

    #[test]
    fn separable_examples() {
        assert_eq!(lin_t().eval_scalar(0.3, &[7.0]), 0.3);
        let d = make_separable_driver(1, Arc::new(|x: &[f64], o: &mut [f64]| o[0] = x[0]), Arc::new(|t| t * t), Regularity::lipschitz(), true, 2.0);
        assert_eq!(d.eval_scalar(1.0, &[2.0]), 2.0);
        let c = make_separable_driver(1, Arc::new(|x: &[f64], o: &mut [f64]| o[0] = x[0].cos()), Arc::new(|t| t), Regularity::lipschitz(), true, 1.0);
        assert_eq!(c.eval_scalar(0.5, &[0.0]), 0.5);
    }

    #[test]
    fn normalization_holds_for_every_constructor() {
        let shifted = make_separable_driver(1, Arc::new(|x: &[f64], o: &mut [f64]| o[0] = 1.0 + x[0]), Arc::new(|t| t + 3.0), Regularity::lipschitz(), true, 1.0);
        let custom = SpaceTimeDriver::custom(
            Arc::new(FnField(|t: f64, x: &[f64]| (t + 1.0) * x[0].sin() + 2.0)),
            Regularity::lipschitz(),
            true,
            1.0,
        );
        let moll = mollify_time(&custom, 0.2, 33).unwrap();
        for x in [-2.0, 0.0, 1.3] {
            assert_eq!(shifted.eval_scalar(0.0, &[x]), 0.0);
            assert_eq!(custom.eval_scalar(0.0, &[x]), 0.0);
            assert!(moll.eval_scalar(0.0, &[x]).abs() < 1e-14);
        }
    }

    struct FnField<F>(F);
    impl<F: Fn(f64, &[f64]) -> f64 + Send + Sync> Field for FnField<F> {
        fn channels(&self) -> usize {
            1
        }
        fn eval_raw(&self, t: f64, x: &[f64], out: &mut [f64]) {
            out[0] = (self.0)(t, x);
        }
    }

    #[test]
    fn mollifying_linear_reproduces_it() {
        let m = mollify_time(&lin_t(), 0.1, 129).unwrap();
        for t in [0.1, 0.3, 0.5, 0.77, 0.9] {
            assert!((m.eval_scalar(t, &[0.0]) - t).abs() < 1e-13, "t={t}");
        }
        let z = mollify_time(&SpaceTimeDriver::zero(1, 1.0), 0.3, 9).unwrap();
        assert_eq!(z.eval_scalar(0.4, &[1.0]), 0.0);
        assert!(z.smooth_in_time());
    }

    #[test]
    fn mollify_rejects_bad_widths() {
        assert!(mollify_time(&lin_t(), 1.0, 9).is_err());
        assert!(mollify_time(&lin_t(), 0.0, 9).is_err());
        assert!(mollify_time(&lin_t(), 0.1, 8).is_err());
    }

    /// Direct convolution of the even-kink driver at 10x resolution.
    #[test]
    fn mollified_kink_matches_fine_convolution() {
        let kink = SpaceTimeDriver::time_only(Arc::new(|t: f64| (t - 0.5).abs()), false, 1.0);
        let delta = 0.1;
        let m = mollify_time(&kink, delta, 129).unwrap();
        let fine = 1281;
        let h = 2.0 / (fine - 1) as f64;
        let oracle = |t: f64| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..fine {
                let u = -1.0 + h * i as f64;
                let c = if i == 0 || i == fine - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                let w = c * bump(u);
                let s = t + delta * u;
                num += w * ((s - 0.5).abs() - 0.5);
                den += w;
            }
            num / den
        };
        for k in 1..10 {
            let t = 0.1 * k as f64;
            let got = m.eval_scalar(t, &[0.0]);
            let base = kink.eval_scalar(t, &[0.0]);
            assert!((got - oracle(t)).abs() < 1e-6, "t={t}: {got} vs {}", oracle(t));
            assert!((got - base).abs() <= delta, "|eta^d - eta| <= C delta^tau with C = 1");
        }
        assert!(m.eval_scalar(0.5, &[0.0]) - kink.eval_scalar(0.5, &[0.0]) > 0.0);
    }

    #[test]
    fn mollification_contracts_uniform_norm() {
        let d = make_separable_driver(1, Arc::new(|x: &[f64], o: &mut [f64]| o[0] = x[0].cos()), Arc::new(|t: f64| (7.0 * t).sin()), Regularity::lipschitz(), true, 1.0);
        let m = mollify_time(&d, 0.15, 65).unwrap();
        let ext: Vec<f64> = (-150..=1150).map(|k| k as f64 * 1e-3).collect();
        for x in [0.0, 1.0, 2.5] {
            let ext_max = ext
                .iter()
                .map(|&s| {
                    let v = if s < 0.0 { -d.eval_scalar(-s, &[x]) } else if s > 1.0 { 2.0 * d.eval_scalar(1.0, &[x]) - d.eval_scalar(2.0 - s, &[x]) } else { d.eval_scalar(s, &[x]) };
                    v.abs()
                })
                .fold(0.0, f64::max);
            for k in 0..=100 {
                assert!(m.eval_scalar(k as f64 / 100.0, &[x]).abs() <= ext_max + 1e-12);
            }
        }
    }

    #[test]
    fn smooth_driver_time_derivative_converges() {
        let d = make_separable_driver(1, Arc::new(|x: &[f64], o: &mut [f64]| o[0] = x[0].cos()), Arc::new(|t: f64| t.abs().sqrt()), Regularity::new(0.5, 1.0, 0.0).unwrap(), false, 1.0);
        let m = mollify_time(&d, 0.2, 129).unwrap();
        let (t, x) = (0.4, [0.3]);
        let fd = |h: f64| (m.eval_scalar(t + h, &x) - m.eval_scalar(t, &x)) / h;
        let (a, b, c) = (fd(1e-2), fd(5e-3), fd(2.5e-3));
        // Richardson ratio of successive differences is ~2 for a first-order quotient.
        let ratio = (a - b) / (b - c);
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn seminorm_examples() {
        let xs: Vec<Vec<f64>> = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let ts: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
        let e = estimate_seminorm(&lin_t(), &ts, &xs, 0.0, 1.0, 0.5, DEFAULT_PAIR_BUDGET).unwrap();
        assert!((e.tau_lambda_beta - 1.0).abs() < 1e-12);
        let z = estimate_seminorm(&SpaceTimeDriver::zero(1, 1.0), &ts, &xs, 0.0, 1.0, 1.0, DEFAULT_PAIR_BUDGET).unwrap();
        assert_eq!(z.tau_lambda_beta, 0.0);
        assert!(estimate_seminorm(&lin_t(), &[0.0], &xs, 0.0, 1.0, 1.0, 10).is_err());
    }

    /// Exhaustive pair enumeration for eta(t, x) = x t.
    #[test]
    fn seminorm_matches_brute_force() {
        let d = make_separable_driver(1, Arc::new(|x: &[f64], o: &mut [f64]| o[0] = x[0]), Arc::new(|t| t), Regularity::lipschitz(), true, 1.0);
        let xs = [-1.0, 0.0, 1.0];
        let ts: Vec<f64> = (0..=5).map(|i| i as f64 / 5.0).collect();
        let eta = |t: f64, x: f64| x * t;
        let (mut r, mut tq, mut sq) = (0.0f64, 0.0f64, 0.0f64);
        for &s in &ts {
            for &t in &ts {
                if s >= t {
                    continue;
                }
                for &x in &xs {
                    tq = tq.max((eta(s, x) - eta(t, x)).abs() / ((t - s) * (1.0 + x.abs())));
                    for &y in &xs {
                        if x != y {
                            let num = (eta(s, x) - eta(t, x) - eta(s, y) + eta(t, y)).abs();
                            r = r.max(num / ((t - s) * (x - y).abs() * 3.0));
                        }
                    }
                }
            }
        }
        for &t in &ts {
            for &x in &xs {
                for &y in &xs {
                    if x != y {
                        sq = sq.max((eta(t, y) - eta(t, x)).abs() / ((x - y).abs() * 3.0));
                    }
                }
            }
        }
        let est = estimate_seminorm(&d, &ts, &xs.iter().map(|v| vec![*v]).collect::<Vec<_>>(), 0.0, 1.0, 1.0, DEFAULT_PAIR_BUDGET).unwrap();
        assert!((est.tau_lambda_beta - (r + tq + sq)).abs() < 1e-12);
        assert!((est.tau_lambda_beta - 7.0 / 6.0).abs() < 1e-12);
        assert!(est.tau_lambda_beta <= est.tau_lambda);
    }

    #[test]
    fn seminorm_monotone_under_refinement() {
        let d = make_separable_driver(1, Arc::new(|x: &[f64], o: &mut [f64]| o[0] = x[0].abs().sqrt()), Arc::new(|t: f64| t.sqrt()), Regularity::new(0.5, 0.5, 0.0).unwrap(), false, 1.0);
        let mut prev = 0.0;
        for n in [2usize, 4, 8, 16] {
            let ts: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
            let xs: Vec<Vec<f64>> = (0..=n).map(|i| vec![-2.0 + 4.0 * i as f64 / n as f64]).collect();
            let e = estimate_seminorm(&d, &ts, &xs, 0.5, 0.5, 0.5, DEFAULT_PAIR_BUDGET).unwrap();
            assert!(e.tau_lambda_beta >= prev - 1e-15);
            assert!(e.tau_lambda_beta <= e.tau_lambda + 1e-15);
            prev = e.tau_lambda_beta;
        }
    }

    #[test]
    fn grid_field_interpolates_and_round_trips() {
        let times = vec![0.0, 0.5, 1.0];
        let axes = vec![vec![-1.0, 1.0], vec![0.0, 2.0]];
        let mut values = vec![0.0; 12];
        for ti in 1..3 {
            for j in 0..4 {
                values[ti * 4 + j] = (ti * 10 + j) as f64;
            }
        }
        let f = GridField::new(times, axes, values).unwrap();
        assert_eq!(f.space_point(1), vec![-1.0, 2.0]);
        let d = grid_driver(f.clone(), Regularity::lipschitz(), 1.0).unwrap();
        assert_eq!(d.eval_scalar(0.5, &[-1.0, 2.0]), 11.0);
        // Midpoint in x_1 between nodes 0 and 2 at t = 1.
        assert_eq!(d.eval_scalar(1.0, &[0.0, 0.0]), 21.0);
        assert_eq!(d.eval_scalar(0.25, &[-1.0, 0.0]), 5.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = GridField::read_csv(&buf[..]).unwrap();
        assert_eq!(back, f);
        assert!(GridField::read_csv(&b"x,1\n0,0\n"[..]).is_err());
    }
}
