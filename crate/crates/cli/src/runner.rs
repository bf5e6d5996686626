//! Experiment kinds: parameter parsing, dispatch to the library, CSV
//! assembly and the run manifest.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DMatrix;
use youngbsde::bsde_solver::{
    decay_table_csv, girsanov_weight, process_from_fn, solution_csv, solve_bsde_with_localization, solve_linear_bsde,
    tower_rule_defect, BsdeProblem, GrowthMeta, LinearBsdeSpec, LocalizationSchedule, LsmcConfig, PathFn, Terminal,
};
use youngbsde::csvfmt::table;
use youngbsde::diffusion::{exit_tail_decay, simulate, CoefFn, DiffusionSpec};
use youngbsde::fractional_sheet::{hurst_region_grid, SheetSampler, SheetSpec};
use youngbsde::paths::{SamplePath, TimeGrid};
use youngbsde::pde_fk::{
    fd_oracle, localization_error_experiment, solve_linear_young_pde, solve_young_pde_double_approximation, ApproxSchedule,
    DoubleApproxConfig, FdSpec, FkConfig, LocalizationConfig, NonLipMeta, PdeProblem,
};
use youngbsde::regression::PolyBasis;
use youngbsde::rng::StreamKey;
use youngbsde::young_calculus::{nonlinear_young_integral, solve_flow, FlowMode, MatrixPath, SpaceEval, YoungOptions};
use youngbsde::par;

use crate::config::Params;
use crate::error::CliError;
use crate::manifest::{now, Outputs, RunManifest};
use crate::registry;

pub const KINDS: [&str; 10] = [
    "simulate-fbs",
    "young-integral",
    "flow",
    "linear-bsde",
    "nonlinear-bsde",
    "pde-fk",
    "localization-error",
    "hurst-region",
    "tower-rule",
    "exit-decay",
];

/// Largest number of CSV rows a single sample export may hold.
pub const MAX_EXPORT_ROWS: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Done,
    /// Outputs are valid but some iteration stopped short of its tolerance.
    NotConverged(String),
}

pub struct RunRequest {
    pub kind: String,
    pub params: Params,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
}

/// Runs one experiment and writes its outputs plus `manifest.json`.
///
/// Nothing is written when parsing, validation or computation fails. A
/// non-converged run writes everything and then reports
/// [`CliError::NonConvergence`].
pub fn run(req: RunRequest) -> Result<PathBuf, CliError> {
    let started_at = now();
    let config = req.params.echo();
    let RunRequest { kind, params, seed, workers, out } = req;
    let kind_c = kind.clone();
    let (outputs, outcome) = par::with_workers(workers, move || {
        let mut o = Outputs::default();
        dispatch(&kind_c, &params, seed, &mut o).map(|s| (o, s))
    })?;
    let status = match &outcome {
        Outcome::Done => "ok".to_string(),
        Outcome::NotConverged(m) => format!("non-converged: {m}"),
    };
    let manifest = RunManifest {
        kind,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        workers,
        config,
        started_at,
        finished_at: String::new(),
        status,
        files: Vec::new(),
        phases: Vec::new(),
        notes: Vec::new(),
    };
    let path = outputs.write(&out, manifest)?;
    match outcome {
        Outcome::Done => Ok(path),
        Outcome::NotConverged(m) => Err(CliError::NonConvergence(m)),
    }
}

/// Computes an experiment in memory.
pub fn dispatch(kind: &str, p: &Params, seed: u64, o: &mut Outputs) -> Result<Outcome, CliError> {
    match kind {
        "simulate-fbs" => simulate_fbs(p, seed, o),
        "young-integral" => young_integral(p, seed, o),
        "flow" => flow(p, seed, o),
        "linear-bsde" => linear_bsde(p, seed, o),
        "nonlinear-bsde" => nonlinear_bsde(p, seed, o),
        "pde-fk" => pde_fk(p, seed, o),
        "localization-error" => localization_error(p, seed, o),
        "hurst-region" => hurst_region(p, o),
        "tower-rule" => tower_rule(p, seed, o),
        "exit-decay" => exit_decay(p, seed, o),
        other => Err(CliError::Config(format!("unknown experiment kind '{other}'; known: {}", KINDS.join(", ")))),
    }
}

fn pre<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Precondition(msg.into()))
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        pre(format!("{name} must be positive and finite, got {v}"))
    }
}

fn nonzero(name: &str, v: usize) -> Result<(), CliError> {
    if v > 0 {
        Ok(())
    } else {
        pre(format!("{name} must be positive"))
    }
}

/// Splits a flat coordinate list into points of dimension `dim`.
fn points_of(name: &str, flat: &[f64], dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    if flat.is_empty() || flat.len() % dim != 0 {
        return Err(CliError::Config(format!("{name} needs a multiple of dim = {dim} coordinates, got {}", flat.len())));
    }
    Ok(flat.chunks(dim).map(|c| c.to_vec()).collect())
}

fn x0_of(p: &Params, dim: usize) -> Result<Vec<f64>, CliError> {
    let x0 = p.f64_list_or("x0", &[0.0])?;
    if x0.len() == 1 && dim > 1 {
        return Ok(vec![x0[0]; dim]);
    }
    if x0.len() != dim {
        return Err(CliError::Config(format!("x0 has {} coordinates for dim = {dim}", x0.len())));
    }
    Ok(x0)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn simulate_fbs(p: &Params, seed: u64, o: &mut Outputs) -> Result<Outcome, CliError> {
    let h0 = p.f64_or("h0", 0.75)?;
    let h = p.f64_list_or("h", &[0.75])?;
    let horizon = p.f64_or("horizon", 1.0)?;
    let nt = p.usize_or("nt", 8)?;
    let nx = p.usize_or("nx", 8)?;
    let x_max = p.f64_or("x_max", 1.0)?;
    let samples = p.usize_or("samples", 100)?;
    let jitter = p.f64_or("jitter", 0.0)?;
    p.finish()?;
    nonzero("samples", samples)?;
    let spec = SheetSpec::uniform(h0, h, horizon, nt, x_max, nx)?;
    if samples * spec.grid_size() > MAX_EXPORT_ROWS {
        return pre(format!("{} rows exceed the export limit {MAX_EXPORT_ROWS}", samples * spec.grid_size()));
    }
    let sampler = o.timed("factorize", || SheetSampler::new(spec.clone(), jitter))?;
    let draws = o.timed("sample", || sampler.sample_batch(StreamKey::new(seed), samples));
    let d = spec.h.len();
    let mut header = vec!["sample".to_string(), "t".to_string()];
    header.extend((1..=d).map(|k| format!("x{k}")));
    header.push("value".into());
    let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows = draws.iter().enumerate().flat_map(|(s, v)| {
        let spec = &spec;
        v.iter().enumerate().map(move |(k, val)| {
            let (t, x) = spec.node(k);
            let mut r = vec![s as f64, t];
            r.extend(x);
            r.push(*val);
            r
        })
    });
    o.add("sheet_samples.csv", table(&h, rows));
    o.add(
        "sheet_summary.csv",
        table(
            &["jitter", "active_nodes", "grid_size"],
            [vec![sampler.jitter(), sampler.active_nodes().len() as f64, spec.grid_size() as f64]],
        ),
    );
    Ok(Outcome::Done)
}

fn young_options(p: &Params) -> Result<YoungOptions, CliError> {
    let space_eval = match p.str_or("space_eval", "left")?.as_str() {
        "left" => SpaceEval::Left,
        "midpoint" => SpaceEval::Midpoint,
        other => return Err(CliError::Config(format!("space_eval must be left or midpoint, got '{other}'"))),
    };
    let max_levels = p.usize_or("max_levels", 16)?;
    Ok(YoungOptions {
        tol_abs: p.f64_or("tol_abs", 1e-6)?,
        tol_rel: p.f64_or("tol_rel", 0.0)?,
        max_levels: u32::try_from(max_levels).map_err(|_| CliError::Config("max_levels is too large".into()))?,
        space_eval,
    })
}

fn scalar_on_grid(f: fn(f64) -> f64, grid: &TimeGrid) -> Result<SamplePath, CliError> {
    Ok(SamplePath::scalar(grid.clone(), grid.times().iter().map(|t| f(*t)).collect())?)
}

fn young_integral(p: &Params, seed: u64, o: &mut Outputs) -> Result<Outcome, CliError> {
    let y = registry::scalar_path(&p.str_or("y", "sin")?)?;
    let x = registry::scalar_path(&p.str_or("x", "t")?)?;
    let horizon = p.f64_or("horizon", 1.0)?;
    let a = p.f64_or("a", 0.0)?;
    let b = p.f64_or("b", horizon)?;
    let steps = p.usize_or("steps", 64)?;
    let opts = young_options(p)?;
    let driver = registry::driver_or(p, "cos-potential", horizon, 1, seed)?;
    p.finish()?;
    positive("horizon", horizon)?;
    nonzero("steps", steps)?;
    if !(0.0 <= a && a < b && b <= horizon) {
        return pre(format!("need 0 <= a < b <= horizon, got a = {a}, b = {b}"));
    }
    let grid = TimeGrid::uniform(horizon, steps)?;
    let (yp, xp) = (scalar_on_grid(y, &grid)?, scalar_on_grid(x, &grid)?);
    let res = o.timed("integrate", || nonlinear_young_integral(&yp, &xp, &driver, a, b, &opts))?;
    o.add("young_gaps.csv", table(&["level", "gap"], res.gaps.iter().enumerate().map(|(k, g)| vec![(k + 1) as f64, *g])));
    o.add(
        "young_integral.csv",
        table(
            &["value", "levels", "cauchy_gap", "converged"],
            [vec![res.total(), res.levels as f64, res.cauchy_gap, flag(res.converged)]],
        ),
    );
    Ok(if res.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged(format!("Young integral gap {:e} after {} levels", res.cauchy_gap, res.levels))
    })
}

fn flow(p: &Params, seed: u64, o: &mut Outputs) -> Result<Outcome, CliError> {
    let (n, alpha) = registry::flow_coef(p)?;
    let x = registry::scalar_path(&p.str_or("x", "cos")?)?;
    let horizon = p.f64_or("horizon", 1.0)?;
    let steps = p.usize_or("steps", 1024)?;
    let base = p.usize_or("base_index", 0)?;
    let mode = match p.str_or("mode", "euler")?.as_str() {
        "euler" => FlowMode::Euler,
        "exact1d" => FlowMode::Exact1D,
        other => return Err(CliError::Config(format!("mode must be euler or exact1d, got '{other}'"))),
    };
    let richardson = p.bool_or("richardson", false)?;
    let opts = young_options(p)?;
    let driver = registry::driver_or(p, "cos-potential", horizon, 1, seed)?;
    p.finish()?;
    positive("horizon", horizon)?;
    nonzero("steps", steps)?;
    if base >= steps {
        return pre(format!("base_index {base} must be below steps = {steps}"));
    }
    let grid = TimeGrid::uniform(horizon, steps)?;
    let xp = scalar_on_grid(x, &grid)?;
    let coef = MatrixPath::from_fn(grid, n, 1, |_, t, _| alpha(t))?;
    let fl = o.timed("flow", || solve_flow(&coef, &driver, &xp, base, mode, richardson, &opts))?;
    let mut header = vec!["t".to_string()];
    for i in 1..=n {
        header.extend((1..=n).map(|j| format!("g{i}{j}")));
    }
    let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows = fl.times.iter().zip(&fl.values).map(|(t, g): (&f64, &DMatrix<f64>)| {
        let mut r = vec![*t];
        for i in 0..n {
            r.extend((0..n).map(|j| g[(i, j)]));
        }
        r
    });
    o.add("flow.csv", table(&h, rows));
    o.add("flow_summary.csv", table(&["richardson_error"], [vec![fl.richardson_error.unwrap_or(f64::NAN)]]));
    Ok(Outcome::Done)
}

struct Forward {
    spec: DiffusionSpec,
    x0: Vec<f64>,
    horizon: f64,
    steps: usize,
    samples: usize,
}

fn forward(p: &Params, default_samples: usize) -> Result<Forward, CliError> {
    let spec = registry::diffusion(p)?;
    let x0 = x0_of(p, spec.dim())?;
    let horizon = p.f64_or("horizon", 1.0)?;
    let steps = p.usize_or("steps", 64)?;
    let samples = p.usize_or("samples", default_samples)?;
    Ok(Forward { spec, x0, horizon, steps, samples })
}

impl Forward {
    fn check(&self) -> Result<TimeGrid, CliError> {
        positive("horizon", self.horizon)?;
        nonzero("steps", self.steps)?;
        nonzero("samples", self.samples)?;
        Ok(TimeGrid::uniform(self.horizon, self.steps)?)
    }
}

fn linear_bsde(p: &Params, seed: u64, o: &mut Outputs) -> Result<Outcome, CliError> {
    let fw = forward(p, 10_000)?;
    let driver = registry::driver(p, fw.horizon, fw.spec.dim(), seed)?;
    let (h, _) = registry::terminal(p)?;
    let girsanov = registry::girsanov(p, fw.spec.dim())?;
    let alpha_value = p.f64_or("alpha_value", 0.0)?;
    let f_value = p.f64_or("f_value", 0.0)?;
    let degree = p.usize_or("degree", 2)? as u32;
    let eval_times = p.f64_list_or("eval_times", &[0.0])?;
    p.finish()?;
    let grid = fw.check()?;
    let d = fw.spec.dim();
    let terminal: PathFn = Arc::new(move |path: &[f64], out: &mut [f64]| out[0] = h(&path[path.len() - d..]));
    let constant = |v: f64| -> Option<CoefFn> {
        (v != 0.0).then(|| Arc::new(move |_, _: &[f64], o: &mut [f64]| o.iter_mut().for_each(|x| *x = v)) as CoefFn)
    };
    let (girsanov_fn, girsanov_bound) = match &girsanov {
        Some((g, b)) => (Some(g.clone()), *b),
        None => (None, 0.0),
    };
    let spec = LinearBsdeSpec {
        n: 1,
        alpha: constant(alpha_value),
        alpha_bound: alpha_value.abs(),
        f: constant(f_value),
        girsanov: girsanov_fn,
        girsanov_bound,
        terminal,
        driver,
    };
    let batch = o.timed("simulate", || simulate(&fw.spec, &fw.x0, &grid, fw.samples, seed))?;
    let sol = o.timed("solve", || solve_linear_bsde(&spec, &batch, &eval_times, degree))?;
    let rows = sol.evals.iter().map(|e| vec![e.time, e.index as f64, e.mean[0].mean, e.mean[0].se]);
    o.add("linear_bsde.csv", table(&["t", "index", "y", "y_se"], rows));
    if let Some((g, bound)) = &girsanov {
        let w = girsanov_weight(&batch, g, *bound)?;
        let m: Vec<f64> = (0..w.samples()).map(|s| w.terminal(s)).collect();
        let ms = youngbsde::stats::mean_se(&m);
        o.add("girsanov.csv", table(&["mean_terminal_weight", "se"], [vec![ms.mean, ms.se]]));
    }
    Ok(Outcome::Done)
}

fn lsmc(p: &Params) -> Result<LsmcConfig, CliError> {
    let d = LsmcConfig::default();
    Ok(LsmcConfig {
        degree: p.usize_or("degree", d.degree as usize)? as u32,
        ridge: p.f64_or("ridge", d.ridge)?,
        picard_tol: p.f64_or("picard_tol", d.picard_tol)?,
        picard_max: p.usize_or("picard_max", d.picard_max)?,
        keep_paths: true,
    })
}

fn growth_meta(p: &Params) -> Result<GrowthMeta, CliError> {
    let d = GrowthMeta::default();
    Ok(GrowthMeta {
        lambda: p.f64_or("lambda", d.lambda)?,
        beta: p.f64_or("beta", d.beta)?,
        epsilon: p.f64_or("epsilon", d.epsilon)?,
        c1: p.f64_or("c1", d.c1)?,
        c_lip: p.f64_or("c_lip", d.c_lip)?,
    })
}

fn nonlinear_bsde(p: &Params, seed: u64, o: &mut Outputs) -> Result<Outcome, CliError> {
    let fw = forward(p, 10_000)?;
    let driver = registry::driver(p, fw.horizon, fw.spec.dim(), seed)?;
    let (h, _) = registry::terminal(p)?;
    let f = registry::reaction(p)?;
    let g = registry::young_coef(p)?;
    let radii = p.f64_list_or("radii", &[6.0])?;
    let cfg = lsmc(p)?;
    let meta = growth_meta(p)?;
    p.finish()?;
    let grid = fw.check()?;
    let schedule = LocalizationSchedule::new(radii, &fw.x0)?;
    let problem = BsdeProblem { diffusion: fw.spec.clone(), x0: fw.x0.clone(), f, g, terminal: Terminal::Markov(h), driver, meta };
    let batch = o.timed("simulate", || simulate(&fw.spec, &fw.x0, &grid, fw.samples, seed))?;
    let run = o.timed("solve", || solve_bsde_with_localization(&problem, &schedule, &batch, &cfg))?;
    o.add("decay.csv", decay_table_csv(&run.table));
    let basis = PolyBasis::new(fw.spec.dim(), cfg.degree).len();
    o.add("solution.csv", solution_csv(&run.solution, basis, fw.spec.dim()));
    let sol = &run.solution;
    Ok(if sol.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged(format!("Picard iteration stopped after {} sweeps", sol.picard_iterations))
    })
}

struct PdeSetup {
    problem: PdeProblem,
    points: Vec<(f64, Vec<f64>)>,
    samples: usize,
    steps: usize,
}

fn pde_setup(p: &Params, seed: u64, default_samples: usize) -> Result<PdeSetup, CliError> {
    let diffusion = registry::diffusion(p)?;
    let d = diffusion.dim();
    let horizon = p.f64_or("horizon", 1.0)?;
    let driver = registry::driver(p, horizon, d, seed)?;
    let (terminal, terminal_lipschitz) = registry::terminal(p)?;
    let f = registry::reaction(p)?;
    let g = registry::young_coef(p)?;
    let meta = growth_meta(p)?;
    let t = p.f64_or("t", 0.0)?;
    let xs = p.f64_list_or("points", &[-1.0, 0.0, 1.0])?;
    let samples = p.usize_or("samples", default_samples)?;
    let steps = p.usize_or("steps", 64)?;
    let points = points_of("points", &xs, d)?.into_iter().map(|x| (t, x)).collect();
    let problem = PdeProblem { diffusion, f, g, driver, terminal, terminal_lipschitz, horizon, meta };
    Ok(PdeSetup { problem, points, samples, steps })
}

impl PdeSetup {
    fn check(&self) -> Result<(), CliError> {
        positive("horizon", self.problem.horizon)?;
        nonzero("samples", self.samples)?;
        nonzero("steps", self.steps)?;
        Ok(self.problem.validate()?)
    }
}

/// Drift and volatility of a one-dimensional constant-coefficient diffusion,
/// for the finite-difference reference.
fn constant_coefficients(p: &Params, spec: &DiffusionSpec) -> Result<(f64, f64), CliError> {
    let name = p.str_or("diffusion", "brownian")?;
    if spec.dim() != 1 {
        return pre("the finite-difference reference is one-dimensional");
    }
    match name.as_str() {
        "brownian" => Ok((1.0, 0.0)),
        "drifted-brownian" => Ok((1.0, p.f64_list_or("drift", &[0.5])?[0])),
        other => pre(format!("the finite-difference reference needs constant coefficients, not '{other}'")),
    }
}

fn pde_fk(p: &Params, seed: u64, o: &mut Outputs) -> Result<Outcome, CliError> {
    let method = p.str_or("method", "linear")?;
    let setup = pde_setup(p, seed, 20_000)?;
    match method.as_str() {
        "linear" => {
            let fd = p.bool_or("fd_reference", false)?;
            let coefs = if fd { Some(constant_coefficients(p, &setup.problem.diffusion)?) } else { None };
            p.finish()?;
            setup.check()?;
            if setup.problem.f.is_some() || setup.problem.g.is_some() {
                return pre("the linear Feynman–Kac method takes f = none and g = none");
            }
            if fd && !setup.problem.driver.smooth_in_time() {
                return pre("the finite-difference reference needs a driver that is smooth in time");
            }
            let cfg = FkConfig { samples: setup.samples, steps: setup.steps, seed };
            let pr = &setup.problem;
            let tab = o.timed("feynman_kac", || solve_linear_young_pde(&*pr.terminal, &pr.diffusion, &pr.driver, &setup.points, &cfg))?;
            o.add("pde_fk.csv", tab.to_csv());
            if let Some((sigma, drift)) = coefs {
                let max_x = setup.points.iter().map(|(_, x)| x[0].abs()).fold(0.0, f64::max);
                let spec = FdSpec::for_points(max_x, pr.horizon, sigma, drift);
                let eta = pr.driver.clone();
                let dh = 1e-6;
                let potential = move |t: f64, x: f64| {
                    let (a, b) = ((t - dh).max(0.0), t + dh);
                    (eta.eval_scalar(b, &[x]) - eta.eval_scalar(a, &[x])) / (b - a)
                };
                let term = pr.terminal.clone();
                if setup.points.iter().any(|(t, _)| *t != 0.0) {
                    return pre("the finite-difference reference reports t = 0 only");
                }
                let sol = o.timed("crank_nicolson", || fd_oracle(&spec, &potential, &|x| term(&[x])))?;
                let rows = tab.rows.iter().map(|r| {
                    let reference = sol.at(r.x[0]);
                    vec![r.x[0], r.u, r.se, reference, (r.u - reference).abs() / reference.abs()]
                });
                o.add("fd_reference.csv", table(&["x", "u_mc", "se", "u_fd", "rel_error"], rows));
            }
            Ok(Outcome::Done)
        }
        "double" => {
            let deltas = p.f64_list_or("deltas", &[0.2, 0.1, 0.0])?;
            let radii = p.f64_list_or("radii", &[2.0, 4.0, 8.0])?;
            let cfg = DoubleApproxConfig { lsmc: LsmcConfig { keep_paths: false, ..lsmc(p)? }, ..DoubleApproxConfig::new(setup.samples, setup.steps, seed) };
            p.finish()?;
            setup.check()?;
            let schedule = ApproxSchedule { deltas, radii };
            let res = o.timed("double_approximation", || {
                solve_young_pde_double_approximation(&setup.problem, &schedule, &setup.points, &cfg)
            })?;
            o.add("pde_fk.csv", res.table.to_csv());
            o.add("double_diagnostics.csv", res.diagnostics_csv());
            if !res.stabilizing() {
                o.note("successive differences are not nonincreasing in radius or mollification");
            }
            Ok(Outcome::Done)
        }
        other => Err(CliError::Config(format!("method must be linear or double, got '{other}'"))),
    }
}

fn localization_error(p: &Params, seed: u64, o: &mut Outputs) -> Result<Outcome, CliError> {
    let setup = pde_setup(p, seed, 20_000)?;
    let meta = NonLipMeta {
        theta1: p.f64_or("theta1", 0.0)?,
        theta2: p.f64_or("theta2", 0.0)?,
        theta3: p.f64_or("theta3", 0.0)?,
        constant: p.f64_or("growth_constant", 1.0)?,
    };
    let radii = p.f64_list_or("radii", &[1.5, 2.0, 2.5, 3.0, 6.0, 8.0])?;
    let cfg = LocalizationConfig { samples: setup.samples, steps: setup.steps, seed, lsmc: LsmcConfig { keep_paths: false, ..lsmc(p)? } };
    p.finish()?;
    setup.check()?;
    if setup.points.iter().any(|(t, _)| *t != 0.0) {
        return pre("the localization experiment evaluates at t = 0");
    }
    meta.validate()?;
    let xs: Vec<Vec<f64>> = setup.points.iter().map(|(_, x)| x.clone()).collect();
    let rep = o.timed("localization", || localization_error_experiment(&setup.problem, &meta, &radii, &xs, &cfg))?;
    o.add("localization_rows.csv", rep.rows_csv());
    o.add("localization_fits.csv", rep.fits_csv());
    for pt in &rep.points {
        for w in &pt.warnings {
            o.note(w.clone());
        }
    }
    Ok(Outcome::Done)
}

fn hurst_region(p: &Params, o: &mut Outputs) -> Result<Outcome, CliError> {
    let d = p.usize_or("d", 1)?;
    let res = p.usize_or("resolution", 101)?;
    p.finish()?;
    let grid = hurst_region_grid(d, res)?;
    o.add("hurst_region.csv", table(&["h0", "h", "admissible"], grid.iter().map(|q| vec![q.h0, q.h, flag(q.admissible)])));
    Ok(Outcome::Done)
}

fn tower_rule(p: &Params, seed: u64, o: &mut Outputs) -> Result<Outcome, CliError> {
    let fw = forward(p, 20_000)?;
    let driver = registry::driver_or(p, "linear-time", fw.horizon, fw.spec.dim(), seed)?;
    let a_name = p.str_or("a_process", "terminal")?;
    let b_name = p.str_or("b_process", "one")?;
    let t = p.f64_or("t", 0.0)?;
    let degree = p.usize_or("degree", 2)? as u32;
    p.finish()?;
    let grid = fw.check()?;
    let d = fw.spec.dim();
    let last = grid.len() - 1;
    let a_fn: fn(&[f64], usize, usize, usize) -> f64 = match a_name.as_str() {
        "terminal" => |path, _, d, last| path[last * d],
        "terminal-square" => |path, _, d, last| path[last * d].powi(2),
        "state" => |path, i, d, _| path[i * d],
        other => return Err(CliError::Config(format!("a_process must be terminal, terminal-square or state, got '{other}'"))),
    };
    let b_fn: fn(&[f64], usize, usize) -> f64 = match b_name.as_str() {
        "one" => |_, _, _| 1.0,
        "state" => |path, i, d| path[i * d],
        other => return Err(CliError::Config(format!("b_process must be one or state, got '{other}'"))),
    };
    let batch = o.timed("simulate", || simulate(&fw.spec, &fw.x0, &grid, fw.samples, seed))?;
    let a = process_from_fn(&batch, |path, i| a_fn(path, i, d, last));
    let b = process_from_fn(&batch, |path, i| b_fn(path, i, d));
    let rep = o.timed("tower", || tower_rule_defect(&a, &b, &driver, &batch, t, degree))?;
    o.add(
        "tower_rule.csv",
        table(
            &["direct", "direct_se", "projected", "projected_se", "combined_se", "defect"],
            [vec![rep.direct.mean, rep.direct.se, rep.projected.mean, rep.projected.se, rep.combined_se, rep.defect()]],
        ),
    );
    Ok(Outcome::Done)
}

fn exit_decay(p: &Params, seed: u64, o: &mut Outputs) -> Result<Outcome, CliError> {
    let fw = forward(p, 100_000)?;
    let radii = p.f64_list_or("radii", &[1.0, 1.5, 2.0, 2.5])?;
    p.finish()?;
    let grid = fw.check()?;
    let rep = o.timed("exit_decay", || exit_tail_decay(&fw.spec, &fw.x0, &radii, &grid, fw.samples, seed))?;
    let rows = rep.radii.iter().zip(&rep.probabilities).zip(&rep.ses).map(|((r, pr), se)| vec![*r, *pr, *se]);
    o.add("exit_probabilities.csv", table(&["radius", "probability", "se"], rows));
    o.add(
        "exit_fit.csv",
        table(&["slope", "intercept", "r2", "used", "dropped"], [vec![rep.fit.slope, rep.fit.intercept, rep.fit.r2, rep.fit.n as f64, rep.dropped.len() as f64]]),
    );
    Ok(Outcome::Done)
}
