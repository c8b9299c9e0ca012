//! Benchmark problems, sweeps, order studies and reports.

pub mod backends;
pub mod config;
pub mod order;
pub mod problems;
pub mod report;
pub mod sweep;

pub use backends::{compare_implicit_backends, BackendComparison, BackendSpec};
pub use config::{RunConfig, SweepJob};
pub use order::{estimate_convergence_order, linear_fit, loglog_slope, LinearFit, OrderEstimate};
pub use problems::{
    exact_diffusion_solution, make_diffusion_benchmark, make_diffusion_benchmark_with, make_scalar_benchmark,
    BenchmarkProblem, DiffusionInit,
};
pub use report::{emit_report, Report, ReportFormat, Row};
pub use sweep::{run_solver, run_sweep, BenchmarkKind, BenchmarkSpec, Metric, SolverSpec, SweepSpec};
