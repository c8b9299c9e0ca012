//! Command-line front end: single solves, sweeps, order estimates, stability
//! rasters and backend comparisons.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use proxode::bench::backends::{compare_implicit_backends, time_growth_exponent, BackendSpec};
use proxode::bench::problems::DEFAULT_SEED;
use proxode::bench::report::{emit_report, write_report, Report, ReportFormat};
use proxode::bench::sweep::{convergence_order, make_row, timed_solve, Metric};
use proxode::bench::{BenchmarkKind, BenchmarkSpec, DiffusionInit, RunConfig, SolverSpec, SweepSpec};
use proxode::stability::{stability_raster, write_raster_csv, write_raster_file, StabilityMethod};
use proxode::{Error, InnerConfig, InnerMethod, Result};

const EXIT_SOLVER_FAILURE: u8 = 2;
const EXIT_INVALID_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "proxode", version, about = "Proximal implicit ODE solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver on one benchmark.
    Solve(SolveArgs),
    /// Run a sweep described by a config file.
    Sweep {
        config: PathBuf,
        /// Override the output path from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate convergence orders by step refinement.
    Order(OrderArgs),
    /// Rasterize a linear stability domain to CSV.
    Stability(StabilityArgs),
    /// Compare proximal, fixed-point and Newton backward Euler on diffusion.
    CompareBackends(BackendArgs),
}

#[derive(Args)]
struct InnerArgs {
    #[arg(long, default_value = "fr")]
    inner: String,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long = "inner-tol", default_value_t = 5e-9)]
    inner_tol: f64,
    #[arg(long = "max-iter", default_value_t = 500)]
    max_iter: usize,
}

impl InnerArgs {
    fn config(&self) -> Result<InnerConfig> {
        let cfg =
            InnerConfig::new(InnerMethod::parse(&self.inner)?, self.eta, self.inner_tol).with_max_iter(self.max_iter);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value = "scalar")]
    benchmark: String,
    #[arg(long, default_value_t = 128)]
    n: usize,
    /// Proximal scheme (`be`, `cn`, `bdf2`..`bdf4`, `ms2`, `ms3`, optionally
    /// `scheme:inner`) or explicit solver (`fe`, `dopri5`, `heun`, `dopri5-fixed`, `heun-fixed`).
    #[arg(long, default_value = "be")]
    scheme: String,
    #[arg(long)]
    step: Option<f64>,
    /// Tolerance for adaptive solvers.
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    inner: InnerArgs,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t0: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    tend: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Diffusion initial condition: `normal` or `gaussian-bump`.
    #[arg(long, default_value = "normal")]
    init: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct OrderArgs {
    #[arg(long, default_value = "scalar")]
    benchmark: String,
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Comma-separated solver names.
    #[arg(long, default_value = "be,cn,bdf2,bdf3,bdf4,ms2")]
    schemes: String,
    /// Comma-separated step sizes in geometric progression.
    #[arg(long, default_value = "0.02,0.01,0.005,0.0025")]
    steps: String,
    #[arg(long, default_value = "fr")]
    inner: String,
    /// Inner step size; defaults to `0.9 / max sum c` per scheme.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long = "inner-tol", default_value_t = 1e-12)]
    inner_tol: f64,
    #[arg(long = "max-iter", default_value_t = 5000)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long, default_value = "be")]
    method: String,
    #[arg(long = "re-range", default_value = "-5,3", allow_hyphen_values = true)]
    re_range: String,
    #[arg(long = "im-range", default_value = "-4,4", allow_hyphen_values = true)]
    im_range: String,
    #[arg(long, default_value_t = 201)]
    resolution: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BackendArgs {
    /// Comma-separated grid sizes.
    #[arg(long, default_value = "16,32,64,128,256,512")]
    n: String,
    #[arg(long, default_value_t = 1e-7)]
    step: f64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| Error::Parse {
                what: what.into(),
                message: format!("'{s}' is not a valid value"),
            })
        })
        .collect()
}

fn parse_range(text: &str, what: &str) -> Result<(f64, f64)> {
    match parse_list::<f64>(text, what)?.as_slice() {
        [a, b] if a < b => Ok((*a, *b)),
        _ => Err(Error::InvalidConfig(format!(
            "{what} must be 'lo,hi' with lo < hi, got '{text}'"
        ))),
    }
}

fn write_output(report: &Report, format: ReportFormat, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => emit_report(report, format, path),
        None => write_report(report, format, std::io::stdout().lock()).map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn run_solve(args: SolveArgs) -> Result<u8> {
    let inner = args.inner.config()?;
    let solver = SolverSpec::parse(&args.scheme, inner)?;
    let param = if solver.is_adaptive() {
        args.tol.unwrap_or(1e-6)
    } else {
        args.step
            .ok_or_else(|| Error::InvalidConfig(format!("--step is required for {}", solver.label())))?
    };
    let spec = SweepSpec {
        benchmark: BenchmarkSpec {
            kind: BenchmarkKind::parse(&args.benchmark)?,
            n: args.n,
            init: DiffusionInit::parse(&args.init)?,
            t0: args.t0,
            t_end: args.tend,
        },
        solvers: vec![solver.clone()],
        step_sizes: vec![param],
        tolerances: vec![param],
        metric: Metric::FinalError,
        repetitions: 1,
        seed: args.seed,
        warmup: false,
    };
    spec.validate()?;
    let format = ReportFormat::parse(&args.format)?;
    let bench = spec.benchmark.build(spec.seed)?;
    let (outcome, ns) = timed_solve(&bench, &solver, param, false);
    let row = make_row(&bench, &solver, param, &outcome, ns);
    let report = Report {
        metadata: spec.metadata(),
        rows: vec![row],
    };
    write_output(&report, format, args.out.as_deref())?;
    match outcome {
        Ok(_) => Ok(0),
        Err(e) if e.is_config_error() => Err(e),
        Err(e) => {
            eprintln!("error: {e}");
            Ok(EXIT_SOLVER_FAILURE)
        }
    }
}

fn run_sweep_cmd(config: &Path, out: Option<PathBuf>) -> Result<u8> {
    let job = RunConfig::load(config)?.into_job()?;
    let report = proxode::bench::run_sweep(&job.spec)?;
    let failed = report.rows.iter().filter(|r| !r.is_ok()).count();
    write_output(&report, job.format, out.or(job.out).as_deref())?;
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", report.rows.len());
    }
    Ok(0)
}

fn run_order(args: OrderArgs) -> Result<u8> {
    let steps: Vec<f64> = parse_list(&args.steps, "--steps")?;
    let bench = BenchmarkSpec {
        kind: BenchmarkKind::parse(&args.benchmark)?,
        n: args.n,
        ..BenchmarkSpec::default()
    }
    .build(args.seed)?;
    let method = InnerMethod::parse(&args.inner)?;
    let mut text = String::from("solver,order,unreliable\n");
    let mut status = 0;
    for name in args.schemes.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let mut solver = SolverSpec::parse(
            name,
            InnerConfig::new(method, 0.1, args.inner_tol).with_max_iter(args.max_iter),
        )?;
        if let SolverSpec::Prox { scheme, config } = &mut solver {
            config.inner.eta = args.eta.unwrap_or(0.9 / scheme.max_weight_sum());
        }
        match convergence_order(&bench, &solver, &steps) {
            Ok(est) => text.push_str(&format!("{},{},{}\n", solver.label(), est.order, est.unreliable)),
            Err(e) if e.is_config_error() => return Err(e),
            Err(e) => {
                eprintln!("{}: {e}", solver.label());
                text.push_str(&format!("{},,\n", solver.label()));
                status = EXIT_SOLVER_FAILURE;
            }
        }
    }
    match args.out {
        Some(path) => std::fs::write(&path, text).map_err(|source| Error::Io { path, source })?,
        None => print!("{text}"),
    }
    Ok(status)
}

fn run_stability(args: StabilityArgs) -> Result<u8> {
    let method = StabilityMethod::parse(&args.method)?;
    let raster = stability_raster(
        method,
        parse_range(&args.re_range, "--re-range")?,
        parse_range(&args.im_range, "--im-range")?,
        args.resolution,
    )?;
    match args.out {
        Some(path) => write_raster_file(&raster, &path)?,
        None => write_raster_csv(&raster, std::io::stdout().lock()).map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })?,
    }
    Ok(0)
}

fn run_backends(args: BackendArgs) -> Result<u8> {
    let spec = BackendSpec {
        grid_sizes: parse_list(&args.n, "--n")?,
        step: args.step,
        steps: args.steps,
        tol: args.tol,
        seed: args.seed,
        warmup: true,
    };
    if spec.grid_sizes.is_empty() || spec.steps == 0 || !(spec.step > 0.0) || !(spec.tol > 0.0) {
        return Err(Error::InvalidConfig(
            "backend comparison needs grid sizes, steps, step and tol".into(),
        ));
    }
    let format = ReportFormat::parse(&args.format)?;
    let cmp = compare_implicit_backends(&spec)?;
    write_output(&cmp.report, format, args.out.as_deref())?;
    let mut err = std::io::stderr().lock();
    for (n, d) in &cmp.disagreement {
        let _ = writeln!(err, "N={n}: max backend disagreement {d:e}");
    }
    if cmp.wall_times("prox-be/newton").len() >= 2 {
        if let Ok(p) = time_growth_exponent(&cmp.wall_times("prox-be/newton")) {
            let _ = writeln!(err, "newton wall time ~ N^{p:.2}");
        }
    }
    let failed = cmp.report.rows.iter().any(|r| !r.is_ok());
    Ok(if failed { EXIT_SOLVER_FAILURE } else { 0 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Sweep { config, out } => run_sweep_cmd(&config, out),
        Command::Order(args) => run_order(args),
        Command::Stability(args) => run_stability(args),
        Command::CompareBackends(args) => run_backends(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_config_error() || matches!(e, Error::Io { .. }) {
                EXIT_INVALID_CONFIG
            } else {
                EXIT_SOLVER_FAILURE
            };
            ExitCode::from(code)
        }
    }
}
