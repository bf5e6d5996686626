//! Euler–Maruyama simulation of `dX = b(t, X) dt + sigma(t, X) dW`, first
//! exit times from centred balls and the exit-tail decay experiment.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::csvfmt::fmt_f64;
use crate::error::{domain, Error, Result};
use crate::par;
use crate::paths::{p_variation, PVarMode, SamplePath, TimeGrid};
use crate::rng::{SampleRng, StreamKey};
use crate::stats::{fit_line, mean_se, LineFit, MeanSe};

/// `(t, x, out)`; the output length is fixed by the owner of the function.
pub type CoefFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

const STREAM_DOMAIN: u64 = 0xD1FF_0510;
const ELLIPTICITY_STRIDE: usize = 64;

#[derive(Clone)]
pub struct DiffusionSpec {
    dim: usize,
    /// Row-major `d x d`.
    sigma: CoefFn,
    b: CoefFn,
    bound: f64,
    lipschitz: f64,
    ellipticity: f64,
    constant_identity: bool,
}

impl std::fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("dim", &self.dim)
            .field("bound", &self.bound)
            .field("lipschitz", &self.lipschitz)
            .field("ellipticity", &self.ellipticity)
            .finish()
    }
}

impl DiffusionSpec {
    /// `ellipticity = 0` means no ellipticity is asserted.
    pub fn new(dim: usize, sigma: CoefFn, b: CoefFn, bound: f64, lipschitz: f64, ellipticity: f64) -> Result<Self> {
        if dim == 0 {
            return domain("diffusion dimension must be positive");
        }
        if !(bound > 0.0) || !(lipschitz > 0.0) || !(ellipticity >= 0.0) {
            return domain(format!("invalid constants: L = {bound}, Lipschitz = {lipschitz}, nu = {ellipticity}"));
        }
        Ok(DiffusionSpec { dim, sigma, b, bound, lipschitz, ellipticity, constant_identity: false })
    }

    /// Standard Brownian motion, `L = sqrt(d)` and `nu = 1`.
    pub fn brownian(dim: usize) -> Self {
        Self::drifted_brownian(vec![0.0; dim])
    }

    /// `sigma = I` with constant drift.
    pub fn drifted_brownian(drift: Vec<f64>) -> Self {
        let dim = drift.len().max(1);
        let bnorm = drift.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sigma: CoefFn = Arc::new(move |_, _, out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..dim {
                out[k * dim + k] = 1.0;
            }
        });
        let b: CoefFn = Arc::new(move |_, _, out: &mut [f64]| out.copy_from_slice(&drift));
        DiffusionSpec {
            dim,
            sigma,
            b,
            bound: (dim as f64).sqrt().max(bnorm),
            lipschitz: 1.0,
            ellipticity: 1.0,
            constant_identity: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn ellipticity(&self) -> f64 {
        self.ellipticity
    }

    pub fn sigma_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.sigma)(t, x, out)
    }

    pub fn drift_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.b)(t, x, out)
    }

    fn check_point(&self, t: f64, x: &[f64], sig: &[f64], drift: &[f64], check_ellipticity: bool) -> Result<()> {
        let tol = self.bound * (1.0 + 1e-12);
        let sn = sig.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bn = drift.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(sn <= tol) || !(bn <= tol) {
            return Err(Error::Contract(format!(
                "coefficient bound L = {} violated at t = {t}, x = {x:?}: |sigma| = {sn}, |b| = {bn}",
                self.bound
            )));
        }
        if check_ellipticity && self.ellipticity > 0.0 {
            let d = self.dim;
            let s = nalgebra::DMatrix::from_row_slice(d, d, sig);
            let a = &s * s.transpose();
            let lo = a.symmetric_eigenvalues().min();
            if lo < self.ellipticity * (1.0 - 1e-12) {
                return Err(Error::Contract(format!(
                    "ellipticity nu = {} violated at t = {t}, x = {x:?}: smallest eigenvalue {lo}",
                    self.ellipticity
                )));
            }
        }
        Ok(())
    }
}

/// Simulated paths, `samples x len x dim` values and `samples x (len - 1) x dim`
/// Brownian increments.
#[derive(Clone, Debug)]
pub struct PathBatch {
    grid: TimeGrid,
    dim: usize,
    samples: usize,
    values: Vec<f64>,
    dw: Vec<f64>,
    seed: u64,
}

impl PathBatch {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// All values of sample `s`, time-major.
    pub fn path(&self, s: usize) -> &[f64] {
        let w = self.grid.len() * self.dim;
        &self.values[s * w..(s + 1) * w]
    }

    pub fn increments(&self, s: usize) -> &[f64] {
        let w = (self.grid.len() - 1) * self.dim;
        &self.dw[s * w..(s + 1) * w]
    }

    pub fn at(&self, s: usize, i: usize) -> &[f64] {
        let o = (s * self.grid.len() + i) * self.dim;
        &self.values[o..o + self.dim]
    }

    pub fn dw_at(&self, s: usize, i: usize) -> &[f64] {
        let o = (s * (self.grid.len() - 1) + i) * self.dim;
        &self.dw[o..o + self.dim]
    }

    pub fn sample_path(&self, s: usize) -> SamplePath {
        SamplePath::new(self.grid.clone(), self.dim, self.path(s).to_vec()).expect("batch paths are well formed")
    }

    /// Rows `sample,time_index,x1..xd`; refuses to write more than `max_rows`.
    pub fn write_csv<W: Write>(&self, mut w: W, max_rows: usize) -> Result<()> {
        let rows = self.samples * self.grid.len();
        if rows > max_rows {
            return Err(Error::Resource(format!("{rows} rows exceed the export limit {max_rows}")));
        }
        let mut head = String::from("sample,time_index");
        for k in 0..self.dim {
            head.push_str(&format!(",x{}", k + 1));
        }
        writeln!(w, "{head}")?;
        for s in 0..self.samples {
            for i in 0..self.grid.len() {
                let cols: Vec<String> = self.at(s, i).iter().map(|v| fmt_f64(*v)).collect();
                writeln!(w, "{s},{i},{}", cols.join(","))?;
            }
        }
        Ok(())
    }
}

/// Reusable per-worker buffers for one Euler–Maruyama path.
pub struct Stepper<'a> {
    spec: &'a DiffusionSpec,
    sig: Vec<f64>,
    drift: Vec<f64>,
    z: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(spec: &'a DiffusionSpec) -> Self {
        let d = spec.dim;
        Stepper { spec, sig: vec![0.0; d * d], drift: vec![0.0; d], z: vec![0.0; d] }
    }

    /// Fills `xs` (`len x d`) and, when given, `dws` (`(len - 1) x d`).
    pub fn run(&mut self, x0: &[f64], times: &[f64], rng: &mut SampleRng, xs: &mut [f64], mut dws: Option<&mut [f64]>) -> Result<()> {
        let d = self.spec.dim;
        xs[..d].copy_from_slice(x0);
        for i in 0..times.len() - 1 {
            let t = times[i];
            let dt = times[i + 1] - t;
            let sq = dt.sqrt();
            for z in self.z.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *z = n * sq;
            }
            let (cur, next) = xs[i * d..(i + 2) * d].split_at_mut(d);
            if self.spec.constant_identity {
                if i == 0 {
                    (self.spec.b)(t, cur, &mut self.drift);
                }
                for k in 0..d {
                    next[k] = cur[k] + self.drift[k] * dt + self.z[k];
                }
            } else {
                (self.spec.sigma)(t, cur, &mut self.sig);
                (self.spec.b)(t, cur, &mut self.drift);
                self.spec.check_point(t, cur, &self.sig, &self.drift, i % ELLIPTICITY_STRIDE == 0)?;
                for k in 0..d {
                    let mut v = cur[k] + self.drift[k] * dt;
                    for j in 0..d {
                        v += self.sig[k * d + j] * self.z[j];
                    }
                    next[k] = v;
                }
            }
            if let Some(dw) = dws.as_deref_mut() {
                dw[i * d..(i + 1) * d].copy_from_slice(&self.z);
            }
        }
        Ok(())
    }
}

/// Per-sample stream family for a master seed.
pub fn path_streams(seed: u64) -> StreamKey {
    StreamKey::new(seed).derive(STREAM_DOMAIN)
}

fn check_inputs(spec: &DiffusionSpec, x0: &[f64], samples: usize) -> Result<()> {
    if samples == 0 {
        return domain("at least one sample is required");
    }
    if x0.len() != spec.dim {
        return domain(format!("x0 has {} coordinates, diffusion has {}", x0.len(), spec.dim));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return domain("x0 must be finite");
    }
    Ok(())
}

/// Simulates `samples` paths; sample `s` uses stream `s` of the seed's family,
/// so it does not depend on `samples` or on the worker count.
pub fn simulate(spec: &DiffusionSpec, x0: &[f64], grid: &TimeGrid, samples: usize, seed: u64) -> Result<PathBatch> {
    check_inputs(spec, x0, samples)?;
    let d = spec.dim;
    let len = grid.len();
    let key = path_streams(seed);
    let mut values = vec![0.0; samples * len * d];
    let mut dw = vec![0.0; samples * (len - 1) * d];
    let errors: Vec<Option<Error>> = {
        let mut pairs: Vec<(&mut [f64], &mut [f64])> =
            values.chunks_mut(len * d).zip(dw.chunks_mut((len - 1) * d)).collect();
        run_chunks(&mut pairs, |s, xs, dws| {
            let mut st = Stepper::new(spec);
            let mut rng = key.sample(s as u64);
            st.run(x0, grid.times(), &mut rng, xs, Some(dws)).err()
        })
    };
    if let Some(e) = errors.into_iter().flatten().next() {
        return Err(e);
    }
    Ok(PathBatch { grid: grid.clone(), dim: d, samples, values, dw, seed })
}

fn run_chunks<F>(pairs: &mut [(&mut [f64], &mut [f64])], f: F) -> Vec<Option<Error>>
where
    F: Fn(usize, &mut [f64], &mut [f64]) -> Option<Error> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        pairs.par_iter_mut().enumerate().map(|(s, (a, b))| f(s, a, b)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairs.iter_mut().enumerate().map(|(s, (a, b))| f(s, a, b)).collect()
    }
}

/// Running maximum of `|X|` per sample, from the same streams as [`simulate`]
/// but without storing paths.
pub fn max_norms(spec: &DiffusionSpec, x0: &[f64], grid: &TimeGrid, samples: usize, seed: u64) -> Result<Vec<f64>> {
    check_inputs(spec, x0, samples)?;
    let d = spec.dim;
    let key = path_streams(seed);
    let out: Vec<Result<f64>> = par::map_indexed(samples, |s| {
        let mut st = Stepper::new(spec);
        let mut rng = key.sample(s as u64);
        let mut xs = vec![0.0; grid.len() * d];
        st.run(x0, grid.times(), &mut rng, &mut xs, None)?;
        Ok(xs.chunks(d).map(norm).fold(0.0, f64::max))
    });
    out.into_iter().collect()
}

#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExitReport {
    pub radius: f64,
    /// First grid index with `|X| > radius`, `None` when the path stays inside.
    pub exit_index: Vec<Option<usize>>,
    pub probability: f64,
    pub se: f64,
    pub horizon: f64,
}

impl ExitReport {
    /// `T_n = min(exit time, T)` for sample `s`.
    pub fn exit_time(&self, s: usize, grid: &TimeGrid) -> f64 {
        match self.exit_index[s] {
            Some(i) => grid.times()[i].min(self.horizon),
            None => self.horizon,
        }
    }

    /// Last grid index used by sample `s` (exit index or final index).
    pub fn stop_index(&self, s: usize, len: usize) -> usize {
        self.exit_index[s].unwrap_or(len - 1)
    }

    pub fn exits(&self) -> usize {
        self.exit_index.iter().filter(|e| e.is_some()).count()
    }
}

pub fn first_exit(batch: &PathBatch, radius: f64) -> Result<ExitReport> {
    if !(radius > 0.0) {
        return domain(format!("exit radius must be positive, got {radius}"));
    }
    let len = batch.grid.len();
    let exit_index: Vec<Option<usize>> =
        par::map_indexed(batch.samples, |s| (0..len).find(|&i| norm(batch.at(s, i)) > radius));
    let hits: Vec<f64> = exit_index.iter().map(|e| if e.is_some() { 1.0 } else { 0.0 }).collect();
    let m = mean_se(&hits);
    Ok(ExitReport { radius, exit_index, probability: m.mean, se: m.se, horizon: batch.grid.horizon() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExitDecayReport {
    pub radii: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub ses: Vec<f64>,
    /// Radii left out because no sample exited.
    pub dropped: Vec<f64>,
    /// `log P(T_n < T)` against `(n - |x0|)^2`.
    pub fit: LineFit,
}

/// Empirical `P(T_n < T)` over radii on one shared batch, with an OLS fit
/// of `log P` against `(n - |x0|)^2`.
pub fn exit_tail_decay(
    spec: &DiffusionSpec,
    x0: &[f64],
    radii: &[f64],
    grid: &TimeGrid,
    samples: usize,
    seed: u64,
) -> Result<ExitDecayReport> {
    let r0 = norm(x0);
    if let Some(bad) = radii.iter().find(|n| !(**n >= r0) || !(**n > 0.0)) {
        return domain(format!("radius {bad} is below |x0| = {r0}"));
    }
    let maxes = max_norms(spec, x0, grid, samples, seed)?;
    let mut rep = ExitDecayReport {
        radii: Vec::new(),
        probabilities: Vec::new(),
        ses: Vec::new(),
        dropped: Vec::new(),
        fit: LineFit { slope: f64::NAN, intercept: f64::NAN, r2: f64::NAN, n: 0 },
    };
    for &n in radii {
        let hits: Vec<f64> = maxes.iter().map(|m| if *m > n { 1.0 } else { 0.0 }).collect();
        let m = mean_se(&hits);
        if m.mean == 0.0 {
            log::warn!("no sample left the ball of radius {n}; radius dropped");
            rep.dropped.push(n);
            continue;
        }
        rep.radii.push(n);
        rep.probabilities.push(m.mean);
        rep.ses.push(m.se);
    }
    if rep.radii.len() < 3 {
        return domain(format!(
            "degenerate input: only {} radii have a nonzero exit probability, need 3",
            rep.radii.len()
        ));
    }
    let xs: Vec<f64> = rep.radii.iter().map(|n| (n - r0).powi(2)).collect();
    let ys: Vec<f64> = rep.probabilities.iter().map(|p| p.ln()).collect();
    rep.fit = fit_line(&xs, &ys)?;
    Ok(rep)
}

/// Sample mean of `||X||_{p-var}^q` over the batch.
pub fn pvar_moment(batch: &PathBatch, p: f64, q: f64) -> Result<MeanSe> {
    let v: Vec<Result<f64>> =
        par::map_indexed(batch.samples, |s| Ok(p_variation(&batch.sample_path(s), p, PVarMode::Exact)?.powf(q)));
    let v: Vec<f64> = v.into_iter().collect::<Result<_>>()?;
    Ok(mean_se(&v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(dim: usize, s: f64, b: f64, bound: f64) -> DiffusionSpec {
        DiffusionSpec::new(
            dim,
            Arc::new(move |_, _, o: &mut [f64]| {
                o.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..dim {
                    o[k * dim + k] = s;
                }
            }),
            Arc::new(move |_, _, o: &mut [f64]| o.iter_mut().for_each(|v| *v = b)),
            bound,
            1.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_coefficients() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let b = simulate(&constant(2, 0.0, 0.0, 1.0), &[0.3, -0.2], &g, 3, 1).unwrap();
        for s in 0..3 {
            for i in 0..g.len() {
                assert_eq!(b.at(s, i), &[0.3, -0.2]);
            }
        }
        let b = simulate(&constant(1, 0.0, 1.0, 1.0), &[0.25], &g, 2, 1).unwrap();
        assert!((b.at(1, 10)[0] - 1.25).abs() < 1e-14);
        let r = first_exit(&b, 5.0).unwrap();
        assert_eq!(r.exit_index, vec![None, None]);
        assert_eq!(r.exit_time(0, &g), 1.0);
    }

    #[test]
    fn linear_crossing_exit_index() {
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let b = simulate(&constant(1, 0.0, 2.0, 2.0), &[0.0], &g, 1, 7).unwrap();
        let r = first_exit(&b, 1.0).unwrap();
        let i = r.exit_index[0].unwrap();
        assert!(g.times()[i] > 0.5 && g.times()[i - 1] <= 0.5);
        assert_eq!(r.probability, 1.0);
    }

    #[test]
    fn brownian_moments() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let b = simulate(&DiffusionSpec::brownian(1), &[0.4], &g, 100_000, 11).unwrap();
        let xt: Vec<f64> = (0..b.samples()).map(|s| b.at(s, 8)[0]).collect();
        let m = mean_se(&xt);
        assert!(m.within(0.4, 3.0), "{m:?}");
        // Variance estimate with the SE of the sample variance for a Gaussian.
        let var = xt.iter().map(|v| (v - m.mean).powi(2)).sum::<f64>() / (xt.len() - 1) as f64;
        let se_var = (2.0f64 / (xt.len() - 1) as f64).sqrt();
        assert!((var - 1.0).abs() <= 3.0 * se_var, "var {var}");
    }

    #[test]
    fn determinism_and_prefix_stability() {
        let g = TimeGrid::uniform(1.0, 20).unwrap();
        let spec = constant(2, 0.7, 0.1, 2.0);
        let a = simulate(&spec, &[0.0, 1.0], &g, 50, 3).unwrap();
        let b = par::with_workers(1, || simulate(&spec, &[0.0, 1.0], &g, 80, 3).unwrap());
        for s in 0..50 {
            assert_eq!(a.path(s), b.path(s));
            assert_eq!(a.increments(s), b.increments(s));
        }
        let c = simulate(&spec, &[0.0, 1.0], &g, 50, 4).unwrap();
        assert_ne!(a.path(0), c.path(0));
        let maxes = max_norms(&spec, &[0.0, 1.0], &g, 50, 3).unwrap();
        for s in 0..50 {
            let m = (0..g.len()).map(|i| norm(a.at(s, i))).fold(0.0, f64::max);
            assert_eq!(m, maxes[s]);
        }
    }

    #[test]
    fn exits_are_nested_in_radius() {
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let b = simulate(&DiffusionSpec::brownian(1), &[0.0], &g, 2000, 5).unwrap();
        let radii = [0.5, 1.0, 1.5, 2.0];
        let reps: Vec<ExitReport> = radii.iter().map(|n| first_exit(&b, *n).unwrap()).collect();
        for w in reps.windows(2) {
            assert!(w[0].probability >= w[1].probability);
            for s in 0..b.samples() {
                assert!(w[0].exit_time(s, &g) <= w[1].exit_time(s, &g));
                let i0 = w[0].exit_index[s].unwrap_or(usize::MAX);
                let i1 = w[1].exit_index[s].unwrap_or(usize::MAX);
                assert!(i0 <= i1);
            }
        }
        assert!(first_exit(&b, 0.0).is_err());
    }

    #[test]
    fn bound_violation_is_a_contract_error() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let e = simulate(&constant(1, 2.0, 0.0, 1.0), &[0.0], &g, 4, 1).unwrap_err();
        assert!(matches!(e, Error::Contract(_)));
        let elliptic = DiffusionSpec::new(
            1,
            Arc::new(|_, _, o: &mut [f64]| o[0] = 0.5),
            Arc::new(|_, _, o: &mut [f64]| o[0] = 0.0),
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(simulate(&elliptic, &[0.0], &g, 2, 1), Err(Error::Contract(_))));
    }

    /// Gaussian tail oracle for the running maximum: by the reflection
    /// principle `P(max_{[0,1]} |W| > n) <= 4 P(W_1 > n)`, and discrete
    /// monitoring only lowers the probability.
    #[test]
    fn exit_tail_decay_fit() {
        let g = TimeGrid::uniform(1.0, 200).unwrap();
        let spec = constant(1, 1.0, 0.0, 1.0);
        let rep = exit_tail_decay(&spec, &[0.0], &[1.0, 1.5, 2.0, 2.5], &g, 100_000, 2024).unwrap();
        assert!(rep.fit.slope < 0.0);
        assert!(rep.fit.r2 >= 0.9, "{:?}", rep.fit);
        for (n, p) in rep.radii.iter().zip(&rep.probabilities) {
            let tail = 0.5 * erfc(n / 2f64.sqrt());
            assert!(*p <= 4.0 * tail + 0.01, "n = {n}: {p} vs {}", 4.0 * tail);
        }
        let still = constant(1, 0.0, 0.0, 1.0);
        assert!(matches!(exit_tail_decay(&still, &[0.0], &[1.0, 2.0, 3.0], &g, 100, 1), Err(Error::Domain(_))));
        assert!(exit_tail_decay(&spec, &[1.5], &[1.0, 2.0, 3.0], &g, 100, 1).is_err());
    }

    /// Complementary error function (Numerical Recipes Chebyshev fit, |err| < 1.2e-7).
    fn erfc(x: f64) -> f64 {
        let z = x.abs();
        let t = 1.0 / (1.0 + 0.5 * z);
        let r = t * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
        if x >= 0.0 { r } else { 2.0 - r }
    }

    #[test]
    fn pvar_moment_stays_bounded() {
        let g = TimeGrid::uniform(1.0, 32).unwrap();
        let small = simulate(&DiffusionSpec::brownian(1), &[0.0], &g, 200, 9).unwrap();
        let large = simulate(&DiffusionSpec::brownian(1), &[0.0], &g, 800, 9).unwrap();
        let a = pvar_moment(&small, 2.5, 2.0).unwrap();
        let b = pvar_moment(&large, 2.5, 2.0).unwrap();
        assert!(a.mean.is_finite() && b.mean.is_finite());
        assert!((a.mean - b.mean).abs() <= 4.0 * (a.se.powi(2) + b.se.powi(2)).sqrt());
    }

    #[test]
    fn csv_export_is_size_guarded() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        let b = simulate(&DiffusionSpec::brownian(1), &[0.0], &g, 2, 1).unwrap();
        let mut out = Vec::new();
        b.write_csv(&mut out, 100).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("sample,time_index,x1\n0,0,0.0000000000000000e0"));
        assert!(matches!(b.write_csv(Vec::new(), 5), Err(Error::Resource(_))));
    }
}
