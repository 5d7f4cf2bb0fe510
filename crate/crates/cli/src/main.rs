//! `chronos`: scheme coefficients, benchmark runs, convergence sweeps and
//! spectral-radius tables from the command line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chronos_core::analysis::{converge, log_grid, radius_sweep, run_benchmark, AnalysisError};
use chronos_core::problems::{benchmark, BenchmarkDef, ProblemError, BENCHMARK_NAMES};
use chronos_core::schemes::{init_scheme, Family, SchemeCoefficients, SchemeError, SchemeSpec};
use chronos_core::stepper::{IterationSettings, StepError, TimeHistory};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    ConfigIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    ConfigParse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl CliError {
    /// 3 for a failed fixed-point iteration, 2 for invalid input, 1 otherwise.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Step(StepError::NonConvergence { .. })
            | CliError::Analysis(AnalysisError::Step(StepError::NonConvergence { .. })) => 3,
            CliError::Invalid(_)
            | CliError::ConfigParse { .. }
            | CliError::Scheme(_)
            | CliError::Problem(_)
            | CliError::Step(_)
            | CliError::Analysis(AnalysisError::Scheme(_))
            | CliError::Analysis(AnalysisError::Problem(_))
            | CliError::Analysis(AnalysisError::Step(_))
            | CliError::Analysis(AnalysisError::NoReference(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "chronos", version, about = "High-order implicit time integration for structural dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the constants of a scheme as JSON.
    Coeffs(Options),
    /// Integrate a benchmark and write its time history as CSV.
    Run(Options),
    /// Error-versus-step-size study over the benchmark's step grid.
    Converge(Options),
    /// Spectral radius of a scheme over a logarithmic frequency grid.
    Spectral(SpectralOptions),
}

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct Options {
    /// JSON file with any of these options as keys; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Scheme family: distinct or multiroot.
    #[arg(long)]
    family: Option<String>,
    /// Number of sub-steps M.
    #[arg(long)]
    order: Option<usize>,
    /// High-frequency spectral radius in [0, 1].
    #[arg(long, alias = "rho-inf")]
    #[serde(alias = "rho_inf")]
    rho: Option<f64>,
    /// Time step size.
    #[arg(long, conflicts_with = "cfl")]
    dt: Option<f64>,
    /// Courant number (rod benchmark only).
    #[arg(long)]
    cfl: Option<f64>,
    /// End of the simulated window.
    #[arg(long)]
    t_end: Option<f64>,
    /// Benchmark name.
    #[arg(long)]
    benchmark: Option<String>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative tolerance of the fixed-point iteration.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap per step.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Report format for `converge`: csv or json (default from the output extension).
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Clone, Args)]
struct SpectralOptions {
    #[command(flatten)]
    base: Options,
    /// Lower end of the dimensionless frequency grid.
    #[arg(long, default_value_t = 1e-3)]
    omega_min: f64,
    /// Upper end of the dimensionless frequency grid.
    #[arg(long, default_value_t = 1e6)]
    omega_max: f64,
    /// Number of logarithmically spaced frequencies.
    #[arg(long, default_value_t = 361)]
    points: usize,
}

impl Options {
    /// Fills every option not given on the command line from the config file.
    fn resolve(self) -> Result<Self, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path).map_err(|source| CliError::ConfigIo {
            path: path.clone(),
            source,
        })?;
        let file: Options =
            serde_json::from_str(&text).map_err(|source| CliError::ConfigParse { path, source })?;
        Ok(Options {
            config: self.config,
            family: self.family.or(file.family),
            order: self.order.or(file.order),
            rho: self.rho.or(file.rho),
            dt: self.dt.or(file.dt),
            cfl: self.cfl.or(file.cfl),
            t_end: self.t_end.or(file.t_end),
            benchmark: self.benchmark.or(file.benchmark),
            out: self.out.or(file.out),
            tol: self.tol.or(file.tol),
            max_iter: self.max_iter.or(file.max_iter),
            format: self.format.or(file.format),
        })
    }

    fn family(&self) -> Result<Family, CliError> {
        let name = self
            .family
            .as_deref()
            .ok_or_else(|| CliError::Invalid("--family is required (distinct or multiroot)".into()))?;
        Ok(name.parse()?)
    }

    fn order(&self) -> Result<usize, CliError> {
        self.order
            .ok_or_else(|| CliError::Invalid("--order is required".into()))
    }

    fn rho(&self) -> Result<f64, CliError> {
        self.rho
            .ok_or_else(|| CliError::Invalid("--rho is required".into()))
    }

    fn scheme_spec(&self, rho: f64) -> Result<SchemeSpec, CliError> {
        let spec = SchemeSpec::new(self.family()?, self.order()?, rho);
        spec.validate()?;
        Ok(spec)
    }

    fn settings(&self) -> Result<IterationSettings, CliError> {
        let mut s = IterationSettings::default();
        if let Some(tol) = self.tol {
            s.tol_rel = tol;
        }
        if let Some(m) = self.max_iter {
            s.max_iter = m;
        }
        s.validate()?;
        Ok(s)
    }

    fn benchmark(&self) -> Result<BenchmarkDef, CliError> {
        let name = self.benchmark.as_deref().ok_or_else(|| {
            CliError::Invalid(format!(
                "--benchmark is required (one of {})",
                BENCHMARK_NAMES.join(", ")
            ))
        })?;
        let mut bench = benchmark(name)?;
        if let Some(t_end) = self.t_end {
            if !(t_end > bench.t0 && t_end.is_finite()) {
                return Err(CliError::Invalid(format!(
                    "t_end = {t_end} must be finite and greater than the start time {}",
                    bench.t0
                )));
            }
            bench.t_end = t_end;
        }
        Ok(bench)
    }

    /// Exactly one of `--dt` / `--cfl`; the Courant number needs a mesh.
    fn step_size(&self, bench: &BenchmarkDef) -> Result<f64, CliError> {
        match (self.dt, self.cfl) {
            (Some(dt), None) => {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(CliError::Invalid(format!("dt = {dt} must be positive and finite")));
                }
                Ok(dt)
            }
            (None, Some(cfl)) => {
                let mesh = bench.mesh.as_ref().ok_or_else(|| {
                    CliError::Invalid(format!(
                        "--cfl is only valid for the rod benchmark, not '{}'",
                        bench.name
                    ))
                })?;
                if !(cfl > 0.0 && cfl.is_finite()) {
                    return Err(CliError::Invalid(format!("cfl = {cfl} must be positive and finite")));
                }
                Ok(mesh.dt_from_cfl(cfl))
            }
            (None, None) => Err(CliError::Invalid("exactly one of --dt or --cfl is required".into())),
            (Some(_), Some(_)) => Err(CliError::Invalid("give either --dt or --cfl, not both".into())),
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Output {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn coeffs_json(sc: &SchemeCoefficients) -> String {
    serde_json::to_string_pretty(sc).expect("scheme constants are serializable") + "\n"
}

fn history_csv(h: &TimeHistory) -> String {
    let n = h.n_dof();
    let mut s = String::from("t");
    for d in 1..=n {
        let _ = write!(s, ",u_{d},v_{d},a_{d}");
    }
    s.push('\n');
    for i in 0..h.len() {
        let _ = write!(s, "{:?}", h.times[i]);
        for d in 0..n {
            let _ = write!(s, ",{:?},{:?},{:?}", h.u[i][d], h.v[i][d], h.a[i][d]);
        }
        s.push('\n');
    }
    s
}

fn cmd_coeffs(opts: Options) -> Result<(), CliError> {
    let opts = opts.resolve()?;
    let sc = init_scheme(opts.scheme_spec(opts.rho()?)?)?;
    write_output(opts.out.as_deref(), &coeffs_json(&sc))
}

fn cmd_run(opts: Options) -> Result<(), CliError> {
    let opts = opts.resolve()?;
    let spec = opts.scheme_spec(opts.rho()?)?;
    let settings = opts.settings()?;
    let bench = opts.benchmark()?;
    let dt = opts.step_size(&bench)?;
    let sc = init_scheme(spec)?;
    let hist = run_benchmark(&bench, &sc, settings, dt)?;
    write_output(opts.out.as_deref(), &history_csv(&hist))
}

/// Worker count from `CHRONOS_THREADS`, when set.
fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("CHRONOS_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Invalid(format!(
                "CHRONOS_THREADS = '{v}' must be a positive integer"
            ))),
        },
        Err(_) => Ok(None),
    }
}

fn cmd_converge(opts: Options) -> Result<(), CliError> {
    let opts = opts.resolve()?;
    if opts.dt.is_some() || opts.cfl.is_some() {
        return Err(CliError::Invalid(
            "converge uses the benchmark's step grid; --dt and --cfl are not accepted".into(),
        ));
    }
    let bench = opts.benchmark()?;
    let settings = opts.settings()?;
    let rhos = match opts.rho {
        Some(r) => vec![r],
        None => bench.rho_set.clone(),
    };
    let specs = rhos
        .iter()
        .map(|&r| opts.scheme_spec(r))
        .collect::<Result<Vec<_>, _>>()?;
    let dts: Vec<f64> = bench
        .dt_grid
        .iter()
        .copied()
        .filter(|&dt| bench.n_steps(dt).is_ok())
        .collect();
    if dts.len() < 2 {
        return Err(CliError::Invalid(format!(
            "t_end = {} leaves fewer than two usable step sizes of the benchmark grid",
            bench.t_end
        )));
    }
    let cap = (!bench.system.is_linear()).then_some(7);
    let format = match opts.format.as_deref() {
        Some("csv") => "csv",
        Some("json") => "json",
        Some(other) => {
            return Err(CliError::Invalid(format!(
                "format '{other}' is not supported (csv or json)"
            )))
        }
        None if opts.out.as_deref().and_then(Path::extension).is_some_and(|e| e == "json") => "json",
        None => "csv",
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Pool(e.to_string()))?;
    let reports = pool.install(|| converge(&bench, &specs, &dts, settings, &[], cap))?;

    let text = if format == "json" {
        serde_json::to_string_pretty(&reports).expect("reports are serializable") + "\n"
    } else {
        chronos_core::analysis::reports_to_csv(&reports)
    };
    write_output(opts.out.as_deref(), &text)
}

fn cmd_spectral(opts: SpectralOptions) -> Result<(), CliError> {
    let base = opts.base.resolve()?;
    if !(opts.omega_min > 0.0 && opts.omega_max > opts.omega_min && opts.omega_max.is_finite()) {
        return Err(CliError::Invalid(format!(
            "frequency range [{}, {}] must satisfy 0 < omega_min < omega_max",
            opts.omega_min, opts.omega_max
        )));
    }
    if opts.points < 2 {
        return Err(CliError::Invalid(format!(
            "points = {} must be at least 2",
            opts.points
        )));
    }
    let sc = init_scheme(base.scheme_spec(base.rho()?)?)?;
    let table = radius_sweep(&sc, &log_grid(opts.omega_min, opts.omega_max, opts.points));
    write_output(base.out.as_deref(), &table.to_csv())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Coeffs(o) => cmd_coeffs(o),
        Command::Run(o) => cmd_run(o),
        Command::Converge(o) => cmd_converge(o),
        Command::Spectral(o) => cmd_spectral(o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
