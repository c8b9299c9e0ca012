//! Solver specifications and sweeps over step sizes or tolerances.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::order::{estimate_convergence_order, OrderEstimate};
use super::problems::{
    make_diffusion_benchmark_with, make_scalar_benchmark, BenchmarkProblem, DiffusionInit, DEFAULT_SEED,
};
use super::report::{Metadata, Report, Row};
use crate::error::{Error, Result};
use crate::explicit::{adaptive_solve, fixed_step_solve, AdaptiveConfig, ExplicitMethod};
use crate::grid::make_uniform_grid;
use crate::inner::{InnerConfig, InnerMethod};
use crate::problem::SolveResult;
use crate::prox::{solve, ProxConfig, ProxScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    #[default]
    Scalar,
    Diffusion,
}

impl BenchmarkKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "scalar" => Ok(BenchmarkKind::Scalar),
            "diffusion" => Ok(BenchmarkKind::Diffusion),
            other => Err(Error::InvalidConfig(format!("unknown benchmark '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub kind: BenchmarkKind,
    /// Grid size; ignored by the scalar benchmark.
    pub n: usize,
    pub init: DiffusionInit,
    pub t0: f64,
    pub t_end: f64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            kind: BenchmarkKind::Scalar,
            n: 128,
            init: DiffusionInit::Normal,
            t0: 0.0,
            t_end: 1.0,
        }
    }
}

impl BenchmarkSpec {
    pub fn build(&self, seed: u64) -> Result<BenchmarkProblem> {
        let bench = match self.kind {
            BenchmarkKind::Scalar => make_scalar_benchmark(),
            BenchmarkKind::Diffusion => make_diffusion_benchmark_with(self.n, seed, self.init)?,
        };
        bench.with_interval(self.t0, self.t_end)
    }

    pub fn grid_size(&self) -> usize {
        match self.kind {
            BenchmarkKind::Scalar => 1,
            BenchmarkKind::Diffusion => self.n,
        }
    }
}

/// One solver configuration. Fixed-step solvers take a step size as their
/// sweep parameter, adaptive ones a tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SolverSpec {
    Prox {
        scheme: ProxScheme,
        config: ProxConfig,
    },
    Fixed {
        method: ExplicitMethod,
    },
    Adaptive {
        method: ExplicitMethod,
        config: AdaptiveConfig,
    },
}

impl SolverSpec {
    pub fn prox(scheme: ProxScheme, inner: InnerConfig) -> Self {
        SolverSpec::Prox {
            scheme,
            config: ProxConfig::new(inner),
        }
    }

    pub fn adaptive(method: ExplicitMethod) -> Self {
        SolverSpec::Adaptive {
            method,
            config: AdaptiveConfig::new(1e-6),
        }
    }

    /// Parse `scheme[:inner]` (`be`, `bdf3:newton`, ...) or an explicit solver
    /// name (`fe`, `dopri5`, `heun`, `dopri5-fixed`, `heun-fixed`).
    pub fn parse(name: &str, inner: InnerConfig) -> Result<Self> {
        match name {
            "fe" | "forward-euler" => {
                return Ok(SolverSpec::Fixed {
                    method: ExplicitMethod::ForwardEuler,
                })
            }
            "dopri5-fixed" => {
                return Ok(SolverSpec::Fixed {
                    method: ExplicitMethod::Dopri5,
                })
            }
            "heun-fixed" => {
                return Ok(SolverSpec::Fixed {
                    method: ExplicitMethod::Heun,
                })
            }
            "dopri5" => return Ok(SolverSpec::adaptive(ExplicitMethod::Dopri5)),
            "heun" => return Ok(SolverSpec::adaptive(ExplicitMethod::Heun)),
            _ => {}
        }
        let (scheme, inner) = match name.split_once(':') {
            Some((scheme, method)) => (
                scheme,
                InnerConfig {
                    method: InnerMethod::parse(method)?,
                    ..inner
                },
            ),
            None => (name, inner),
        };
        let scheme = ProxScheme::parse(scheme.strip_prefix("prox-").unwrap_or(scheme))?;
        Ok(SolverSpec::prox(scheme, inner))
    }

    pub fn label(&self) -> String {
        match self {
            SolverSpec::Prox { scheme, config } => format!("prox-{}/{}", scheme.name(), config.inner.method.name()),
            SolverSpec::Fixed { method } => match method {
                ExplicitMethod::ForwardEuler => "fe".into(),
                m => format!("{}-fixed", m.name()),
            },
            SolverSpec::Adaptive { method, .. } => method.name().into(),
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, SolverSpec::Adaptive { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SolverSpec::Prox { config, .. } => config.inner.validate(),
            SolverSpec::Fixed { .. } => Ok(()),
            SolverSpec::Adaptive { method, config } => {
                if *method == ExplicitMethod::ForwardEuler {
                    return Err(Error::InvalidConfig("forward Euler has no adaptive variant".into()));
                }
                config.validate()
            }
        }
    }
}

/// Integrate `bench` from its default state with `solver` at parameter `param`.
pub fn run_solver(bench: &BenchmarkProblem, solver: &SolverSpec, param: f64) -> Result<SolveResult> {
    match solver {
        SolverSpec::Prox { scheme, config } => {
            let grid = make_uniform_grid(bench.t0, bench.t_end, param)?;
            solve(&bench.problem, *scheme, &grid, &bench.default_init, config)
        }
        SolverSpec::Fixed { method } => {
            let grid = make_uniform_grid(bench.t0, bench.t_end, param)?;
            fixed_step_solve(&bench.problem, *method, &grid, &bench.default_init)
        }
        SolverSpec::Adaptive { method, config } => {
            let cfg = AdaptiveConfig { tol: param, ..*config };
            adaptive_solve(
                &bench.problem,
                *method,
                bench.t0,
                bench.t_end,
                &bench.default_init,
                &cfg,
            )
        }
    }
}

/// Short tag for the CSV `status` column.
pub fn status_tag(err: &Error) -> &'static str {
    match err {
        Error::InnerNotConverged { .. } => "inner-not-converged",
        Error::Divergence { .. } => "divergence",
        Error::MaxStepsExceeded { .. } => "max-steps",
        Error::StiffnessFailure { .. } => "stiffness",
        Error::SingularJacobian => "singular-jacobian",
        e if e.is_config_error() => "invalid-config",
        _ => "error",
    }
}

/// Turn one solve outcome into a report row. Failed solves keep the counters
/// of their partial trajectory when one is available.
pub fn make_row(
    bench: &BenchmarkProblem,
    solver: &SolverSpec,
    param: f64,
    outcome: &Result<SolveResult>,
    wall_time_ns: u64,
) -> Row {
    let (result, status, error) = match outcome {
        Ok(r) => (
            Some(r),
            "ok",
            r.final_error(&bench.problem).ok().filter(|e| e.is_finite()),
        ),
        Err(e) => {
            let partial = match e {
                Error::MaxStepsExceeded { partial, .. } | Error::StiffnessFailure { partial, .. } => {
                    Some(partial.as_ref())
                }
                _ => None,
            };
            (partial, status_tag(e), None)
        }
    };
    let (nfe, inner, accepted, rejected) = result
        .map(|r| {
            (
                r.nfe_total,
                r.inner_iterations_total() as u64,
                r.accepted_steps as u64,
                r.rejected_steps as u64,
            )
        })
        .unwrap_or_default();
    Row {
        solver: solver.label(),
        param,
        final_error: error,
        nfe,
        wall_time_ns,
        inner_iter_total: inner,
        accepted,
        rejected,
        status: status.into(),
    }
}

/// Time one solve: optional discarded warm-up, then a monotonic-clock measurement.
pub fn timed_solve(
    bench: &BenchmarkProblem,
    solver: &SolverSpec,
    param: f64,
    warmup: bool,
) -> (Result<SolveResult>, u64) {
    if warmup {
        let _ = run_solver(bench, solver, param);
    }
    let start = Instant::now();
    let outcome = run_solver(bench, solver, param);
    let elapsed = start.elapsed().as_nanos() as u64;
    (outcome, elapsed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    FinalError,
    Nfe,
    WallTime,
}

impl Metric {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "final-error" | "final_error" => Ok(Metric::FinalError),
            "nfe" => Ok(Metric::Nfe),
            "wall-time" | "wall_time" => Ok(Metric::WallTime),
            other => Err(Error::InvalidConfig(format!("unknown metric '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::FinalError => "final-error",
            Metric::Nfe => "nfe",
            Metric::WallTime => "wall-time",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub benchmark: BenchmarkSpec,
    pub solvers: Vec<SolverSpec>,
    /// Axis for fixed-step solvers.
    pub step_sizes: Vec<f64>,
    /// Axis for adaptive solvers.
    pub tolerances: Vec<f64>,
    pub metric: Metric,
    /// Zero is treated as one.
    pub repetitions: usize,
    pub seed: u64,
    /// Run each combination once untimed before measuring.
    pub warmup: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            benchmark: BenchmarkSpec::default(),
            solvers: Vec::new(),
            step_sizes: Vec::new(),
            tolerances: Vec::new(),
            metric: Metric::FinalError,
            repetitions: 1,
            seed: DEFAULT_SEED,
            warmup: true,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one solver".into()));
        }
        for solver in &self.solvers {
            solver.validate()?;
            let axis = self.axis_for(solver);
            if axis.is_empty() {
                let which = if solver.is_adaptive() {
                    "tolerances"
                } else {
                    "step sizes"
                };
                return Err(Error::InvalidConfig(format!(
                    "solver {} needs a nonempty list of {which}",
                    solver.label()
                )));
            }
            if axis.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidConfig("sweep parameters must be positive".into()));
            }
        }
        if !(self.benchmark.t_end > self.benchmark.t0) {
            return Err(Error::InvalidConfig("end time must exceed start time".into()));
        }
        Ok(())
    }

    pub fn axis_for(&self, solver: &SolverSpec) -> &[f64] {
        if solver.is_adaptive() {
            &self.tolerances
        } else {
            &self.step_sizes
        }
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn metadata(&self) -> Metadata {
        Metadata {
            benchmark: match self.benchmark.kind {
                BenchmarkKind::Scalar => "scalar".into(),
                BenchmarkKind::Diffusion => "diffusion".into(),
            },
            seed: self.seed,
            grid_size: self.benchmark.grid_size(),
            metric: self.metric.name().into(),
            config_hash: self.config_hash(),
            artifact_version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// Run every `(solver, parameter, repetition)` in spec order. Individual
/// failures become rows with a failure status; the sweep continues.
pub fn run_sweep(spec: &SweepSpec) -> Result<Report> {
    spec.validate()?;
    let bench = spec.benchmark.build(spec.seed)?;
    let mut rows = Vec::new();
    for solver in &spec.solvers {
        for &param in spec.axis_for(solver) {
            for rep in 0..spec.repetitions.max(1) {
                let (outcome, ns) = timed_solve(&bench, solver, param, spec.warmup && rep == 0);
                rows.push(make_row(&bench, solver, param, &outcome, ns));
            }
        }
    }
    Ok(Report {
        metadata: spec.metadata(),
        rows,
    })
}

/// Order of `solver` on `bench` from final errors over `step_sizes`.
pub fn convergence_order(bench: &BenchmarkProblem, solver: &SolverSpec, step_sizes: &[f64]) -> Result<OrderEstimate> {
    estimate_convergence_order(step_sizes, |s| {
        let result = run_solver(bench, solver, s)?;
        result.final_error(&bench.problem)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_spec() -> SweepSpec {
        SweepSpec {
            solvers: vec![
                SolverSpec::prox(ProxScheme::BackwardEuler, InnerConfig::new(InnerMethod::Fr, 0.2, 1e-10)),
                SolverSpec::Fixed {
                    method: ExplicitMethod::ForwardEuler,
                },
                SolverSpec::adaptive(ExplicitMethod::Dopri5),
            ],
            step_sizes: vec![0.1, 0.05],
            tolerances: vec![1e-6],
            repetitions: 2,
            warmup: false,
            ..SweepSpec::default()
        }
    }

    #[test]
    fn parse_names() {
        let inner = InnerConfig::default();
        assert_eq!(SolverSpec::parse("bdf3", inner).unwrap().label(), "prox-bdf3/fr");
        assert_eq!(SolverSpec::parse("be:newton", inner).unwrap().label(), "prox-be/newton");
        assert_eq!(SolverSpec::parse("dopri5", inner).unwrap().label(), "dopri5");
        assert_eq!(SolverSpec::parse("heun-fixed", inner).unwrap().label(), "heun-fixed");
        assert!(SolverSpec::parse("rk4", inner).is_err());
        assert!(SolverSpec::parse("be:sgd", inner).is_err());
    }

    #[test]
    fn rows_in_spec_order() {
        let report = run_sweep(&scalar_spec()).unwrap();
        let labels: Vec<_> = report.rows.iter().map(|r| (r.solver.as_str(), r.param)).collect();
        assert_eq!(
            labels,
            vec![
                ("prox-be/fr", 0.1),
                ("prox-be/fr", 0.1),
                ("prox-be/fr", 0.05),
                ("prox-be/fr", 0.05),
                ("fe", 0.1),
                ("fe", 0.1),
                ("fe", 0.05),
                ("fe", 0.05),
                ("dopri5", 1e-6),
                ("dopri5", 1e-6),
            ]
        );
        assert!(report.rows.iter().all(|r| r.is_ok()));
        assert_eq!(report.rows[4].nfe, 10);
    }

    #[test]
    fn seeded_determinism() {
        let mut spec = scalar_spec();
        spec.benchmark.kind = BenchmarkKind::Diffusion;
        spec.benchmark.n = 8;
        spec.step_sizes = vec![0.01];
        spec.solvers.remove(1);
        let strip = |mut r: Report| {
            r.rows.iter_mut().for_each(|row| row.wall_time_ns = 0);
            r
        };
        let a = strip(run_sweep(&spec).unwrap());
        let b = strip(run_sweep(&spec).unwrap());
        assert_eq!(a, b);
        spec.seed += 1;
        assert_ne!(a.metadata.config_hash, spec.config_hash());
    }

    #[test]
    fn failures_become_rows() {
        let spec = SweepSpec {
            solvers: vec![SolverSpec::prox(
                ProxScheme::BackwardEuler,
                InnerConfig::new(InnerMethod::Gd, 0.2, 1e-14).with_max_iter(2),
            )],
            step_sizes: vec![0.1],
            warmup: false,
            ..SweepSpec::default()
        };
        let report = run_sweep(&spec).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].status, "inner-not-converged");
        assert_eq!(report.rows[0].final_error, None);
    }

    #[test]
    fn zero_repetitions_means_one() {
        let mut spec = scalar_spec();
        spec.repetitions = 0;
        assert_eq!(run_sweep(&spec).unwrap().rows.len(), 5);
    }

    #[test]
    fn empty_axis_rejected() {
        let mut spec = scalar_spec();
        spec.tolerances.clear();
        assert!(matches!(run_sweep(&spec), Err(Error::InvalidConfig(_))));
        spec.solvers.clear();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn forward_euler_first_order() {
        let bench = make_scalar_benchmark();
        let fe = SolverSpec::Fixed {
            method: ExplicitMethod::ForwardEuler,
        };
        let est = convergence_order(&bench, &fe, &[0.01, 0.005, 0.0025, 0.00125]).unwrap();
        assert!((0.8..=1.2).contains(&est.order), "order {}", est.order);
    }
}
