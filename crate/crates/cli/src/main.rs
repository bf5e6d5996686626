use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use youngbsde_cli::acceptance::{self, Tolerances};
use youngbsde_cli::config::Params;
use youngbsde_cli::error::CliError;
use youngbsde_cli::manifest::{now, verify, Outputs, RunManifest};
use youngbsde_cli::runner::{self, RunRequest};

/// Exit status when the acceptance suite ran but some criterion failed.
const ACCEPTANCE_FAILED: u8 = 6;
const WORKERS_ENV: &str = "YOUNGBSDE_WORKERS";

#[derive(Parser)]
#[command(name = "youngbsde", version, about = "Young BSDE and Young PDE experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat TOML file of experiment parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the CSV files and manifest.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; falls back to the config key, then YOUNGBSDE_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
    /// KEY=VALUE, repeatable. Later overrides win.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Extra `--key value` pairs, treated as overrides.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., hide = true)]
    extra: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Samples a fractional Brownian sheet on a grid.
    SimulateFbs(Common),
    /// Nonlinear Young integral with dyadic refinement.
    YoungIntegral(Common),
    /// Matrix Young flow.
    Flow(Common),
    /// Linear Young BSDE through its explicit representation.
    LinearBsde(Common),
    /// Localized least-squares Monte Carlo for a nonlinear Young BSDE.
    NonlinearBsde(Common),
    /// Feynman–Kac solution of a Young PDE at given points.
    PdeFk(Common),
    /// Decay of the localization error in the exit radius.
    LocalizationError(Common),
    /// Admissible Hurst parameters on a grid.
    HurstRegion(Common),
    /// Monte Carlo check of the tower rule for Young integrals.
    TowerRule(Common),
    /// Exit probabilities against the radius.
    ExitDecay(Common),
    /// Runs the acceptance criteria.
    Acceptance {
        #[command(flatten)]
        common: Common,
        /// "" or "all", "fast", or criterion numbers such as "1,4,12".
        #[arg(long)]
        suite: Option<String>,
    },
    /// Checks the checksums in DIR/manifest.json.
    Verify { dir: PathBuf },
}

/// Splits the trailing `--key value` / `--key=value` pairs into known
/// flags, which clap could not see once a free key started the tail, and
/// parameter overrides.
fn absorb_extra(c: &Common) -> Result<Common, CliError> {
    let mut out = c.clone();
    out.extra.clear();
    let mut it = c.extra.iter();
    while let Some(a) = it.next() {
        let Some(key) = a.strip_prefix("--") else {
            return Err(CliError::Config(format!("unexpected argument '{a}'")));
        };
        let (k, v) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => match it.next() {
                Some(v) => (key.to_string(), v.clone()),
                None => return Err(CliError::Config(format!("--{key} needs a value"))),
            },
        };
        let bad = |what: &str| CliError::Config(format!("--{k} must be {what}, got '{v}'"));
        match k.as_str() {
            "out" => out.out = PathBuf::from(&v),
            "config" => out.config = Some(PathBuf::from(&v)),
            "seed" => out.seed = Some(v.parse().map_err(|_| bad("a u64"))?),
            "workers" => out.workers = Some(v.parse().map_err(|_| bad("a positive integer"))?),
            "override" => out.overrides.push(v),
            _ => out.overrides.push(format!("{k}={v}")),
        }
    }
    Ok(out)
}

fn load_params(c: &Common, kind: &str) -> Result<Params, CliError> {
    let mut p = match &c.config {
        Some(path) => Params::from_file(path)?,
        None => Params::default(),
    };
    for kv in &c.overrides {
        p.apply_override(kv)?;
    }
    if p.contains("kind") {
        let k = p.str_req("kind")?;
        if k != kind {
            return Err(CliError::Config(format!("config is for '{k}', not '{kind}'")));
        }
    }
    Ok(p)
}

fn resolve_seed(c: &Common, p: &Params) -> Result<u64, CliError> {
    let from_config = p.u64_opt("seed")?;
    Ok(c.seed.or(from_config).unwrap_or(0))
}

fn resolve_workers(c: &Common, p: &Params) -> Result<usize, CliError> {
    let from_config = p.usize_or("workers", 0)?;
    let from_env = match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got '{v}'")))?,
        Err(_) => 0,
    };
    let n = c
        .workers
        .filter(|w| *w > 0)
        .or((from_config > 0).then_some(from_config))
        .or((from_env > 0).then_some(from_env))
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if c.workers == Some(0) {
        return Err(CliError::Config("--workers must be positive".into()));
    }
    Ok(n)
}

fn run_experiment(kind: &str, c: &Common) -> Result<(), CliError> {
    let c = &absorb_extra(c)?;
    let params = load_params(c, kind)?;
    let seed = resolve_seed(c, &params)?;
    let workers = resolve_workers(c, &params)?;
    let manifest = runner::run(RunRequest { kind: kind.to_string(), params, seed, workers, out: c.out.clone() })?;
    println!("{}", serde_json::json!({ "status": "ok", "manifest": manifest.display().to_string() }));
    Ok(())
}

fn run_acceptance(c: &Common, suite: Option<&str>) -> Result<bool, CliError> {
    let c = &absorb_extra(c)?;
    let params = load_params(c, "acceptance")?;
    let seed = resolve_seed(c, &params)?;
    let workers = resolve_workers(c, &params)?;
    let from_config = params.str_or("suite", "")?;
    let ids = acceptance::select(suite.unwrap_or(&from_config))?;
    let tol = Tolerances::from_params(&params)?;
    params.finish()?;
    let started_at = now();
    let reports = acceptance::run_suite(&ids, &tol, workers, |r| println!("{}", r.line()));
    let mut o = Outputs::default();
    for r in &reports {
        o.add(&r.file_name(), r.csv.clone());
        o.phases.push(youngbsde_cli::manifest::Phase { name: format!("criterion_{:02}", r.id), seconds: r.seconds });
        o.note(r.json());
    }
    o.add("acceptance.csv", acceptance::summary_csv(&reports));
    let passed = reports.iter().filter(|r| r.pass).count();
    let all = passed == reports.len();
    let manifest = RunManifest {
        kind: "acceptance".into(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        workers,
        config: params.echo(),
        started_at,
        finished_at: String::new(),
        status: if all { "ok".into() } else { format!("{} of {} criteria failed", reports.len() - passed, reports.len()) },
        files: Vec::new(),
        phases: Vec::new(),
        notes: Vec::new(),
    };
    o.write(&c.out, manifest)?;
    println!("{passed}/{} criteria passed", reports.len());
    Ok(all)
}

struct JsonLogger;

impl log::Log for JsonLogger {
    fn enabled(&self, m: &log::Metadata) -> bool {
        m.level() <= log::Level::Warn
    }

    fn log(&self, r: &log::Record) {
        if self.enabled(r.metadata()) {
            let level = r.level().as_str().to_lowercase();
            eprintln!("{}", serde_json::json!({ "level": level, "target": r.target(), "message": r.args().to_string() }));
        }
    }

    fn flush(&self) {}
}

static LOGGER: JsonLogger = JsonLogger;

fn main() -> ExitCode {
    let _ = log::set_logger(&LOGGER).map(|()| log::set_max_level(log::LevelFilter::Warn));
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::SimulateFbs(c) => run_experiment("simulate-fbs", c),
        Cmd::YoungIntegral(c) => run_experiment("young-integral", c),
        Cmd::Flow(c) => run_experiment("flow", c),
        Cmd::LinearBsde(c) => run_experiment("linear-bsde", c),
        Cmd::NonlinearBsde(c) => run_experiment("nonlinear-bsde", c),
        Cmd::PdeFk(c) => run_experiment("pde-fk", c),
        Cmd::LocalizationError(c) => run_experiment("localization-error", c),
        Cmd::HurstRegion(c) => run_experiment("hurst-region", c),
        Cmd::TowerRule(c) => run_experiment("tower-rule", c),
        Cmd::ExitDecay(c) => run_experiment("exit-decay", c),
        Cmd::Acceptance { common, suite } => match run_acceptance(common, suite.as_deref()) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(ACCEPTANCE_FAILED),
            Err(e) => Err(e),
        },
        Cmd::Verify { dir } => match verify(dir) {
            Ok(true) => {
                println!("{}", serde_json::json!({ "status": "ok", "verified": dir.display().to_string() }));
                Ok(())
            }
            Ok(false) => Err(CliError::Io(format!("checksum mismatch in {}", dir.display()))),
            Err(e) => Err(e),
        },
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
