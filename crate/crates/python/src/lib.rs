//! Python bindings: benchmark and user-defined solves, stability queries and
//! the diffusion oracle.

use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use proxode::bench::backends::{compare_implicit_backends, BackendSpec};
use proxode::bench::config::RunConfig;
use proxode::bench::problems::{DiffusionInit, DEFAULT_SEED};
use proxode::bench::report::Row;
use proxode::bench::sweep::{convergence_order as order_of, run_solver, BenchmarkKind, BenchmarkSpec, SolverSpec};
use proxode::bench::{exact_diffusion_solution as exact_diffusion, run_sweep, BenchmarkProblem};
use proxode::stability::{self, StabilityMethod};
use proxode::{InnerConfig, InnerMethod, OdeProblem, SolveResult, State};

create_exception!(pyproxode, ProxodeError, PyException);
create_exception!(pyproxode, ConfigError, ProxodeError);
create_exception!(pyproxode, SolverError, ProxodeError);

fn to_py(err: proxode::Error) -> PyErr {
    if err.is_config_error() {
        ConfigError::new_err(err.to_string())
    } else {
        SolverError::new_err(err.to_string())
    }
}

/// Inner optimizer settings for the proximal schemes.
#[pyclass(name = "InnerConfig", module = "pyproxode", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInnerConfig {
    inner: InnerConfig,
}

#[pymethods]
impl PyInnerConfig {
    #[new]
    #[pyo3(signature = (method = "fr", eta = 0.1, tol = 5e-9, max_iter = 500))]
    fn new(method: &str, eta: f64, tol: f64, max_iter: usize) -> PyResult<Self> {
        let inner = InnerConfig::new(InnerMethod::parse(method).map_err(to_py)?, eta, tol).with_max_iter(max_iter);
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.name()
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[getter]
    fn tol(&self) -> f64 {
        self.inner.tol
    }

    #[getter]
    fn max_iter(&self) -> usize {
        self.inner.max_iter
    }

    fn __repr__(&self) -> String {
        format!(
            "InnerConfig(method='{}', eta={}, tol={:e}, max_iter={})",
            self.inner.method.name(),
            self.inner.eta,
            self.inner.tol,
            self.inner.max_iter
        )
    }
}

/// Trajectory and counters of one solve.
#[pyclass(name = "SolveResult", module = "pyproxode", frozen)]
struct PySolveResult {
    solver: String,
    result: SolveResult,
    final_error: Option<f64>,
}

#[pymethods]
impl PySolveResult {
    #[getter]
    fn solver(&self) -> &str {
        &self.solver
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.result.times.clone()
    }

    #[getter]
    fn states(&self) -> Vec<Vec<f64>> {
        self.result.states.clone()
    }

    #[getter]
    fn final_state(&self) -> Vec<f64> {
        self.result.states.last().cloned().unwrap_or_default()
    }

    #[getter]
    fn nfe(&self) -> u64 {
        self.result.nfe_total
    }

    #[getter]
    fn inner_iterations(&self) -> Vec<usize> {
        self.result.inner_iterations.clone()
    }

    #[getter]
    fn accepted(&self) -> usize {
        self.result.accepted_steps
    }

    #[getter]
    fn rejected(&self) -> usize {
        self.result.rejected_steps
    }

    /// `||h_N - h(T)||` against the exact solution, if the problem has one.
    #[getter]
    fn final_error(&self) -> Option<f64> {
        self.final_error
    }

    fn __len__(&self) -> usize {
        self.result.times.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveResult(solver='{}', steps={}, nfe={}, final_error={:?})",
            self.solver,
            self.result.times.len().saturating_sub(1),
            self.result.nfe_total,
            self.final_error
        )
    }
}

fn default_inner(inner: Option<PyRef<'_, PyInnerConfig>>) -> InnerConfig {
    inner.map(|c| c.inner).unwrap_or_default()
}

/// Step for fixed-step solvers, tolerance for adaptive ones.
fn solver_param(solver: &SolverSpec, step: Option<f64>, tol: Option<f64>) -> PyResult<f64> {
    let (value, name) = if solver.is_adaptive() {
        (tol, "tol")
    } else {
        (step, "step")
    };
    value.ok_or_else(|| ConfigError::new_err(format!("solver '{}' needs `{name}`", solver.label())))
}

fn run(py: Python<'_>, bench: &BenchmarkProblem, solver: &SolverSpec, param: f64) -> PyResult<PySolveResult> {
    let result = py.detach(|| run_solver(bench, solver, param)).map_err(to_py)?;
    let final_error = result.final_error(&bench.problem).ok();
    Ok(PySolveResult {
        solver: solver.label(),
        result,
        final_error,
    })
}

/// Solve a built-in benchmark (`scalar` or `diffusion`).
///
/// `scheme` takes proximal schemes (`be`, `cn`, `bdf2`..`bdf4`, `ms2`, `ms3`,
/// optionally `scheme:inner`) and explicit solvers (`fe`, `dopri5`, `heun`,
/// `dopri5-fixed`, `heun-fixed`).
#[pyfunction]
#[pyo3(signature = (benchmark = "scalar", scheme = "be", step = None, tol = None, inner = None, n = 128, seed = DEFAULT_SEED, init = "normal", t0 = 0.0, tend = 1.0))]
#[allow(clippy::too_many_arguments)]
fn solve_benchmark(
    py: Python<'_>,
    benchmark: &str,
    scheme: &str,
    step: Option<f64>,
    tol: Option<f64>,
    inner: Option<PyRef<'_, PyInnerConfig>>,
    n: usize,
    seed: u64,
    init: &str,
    t0: f64,
    tend: f64,
) -> PyResult<PySolveResult> {
    let spec = BenchmarkSpec {
        kind: BenchmarkKind::parse(benchmark).map_err(to_py)?,
        n,
        init: DiffusionInit::parse(init).map_err(to_py)?,
        t0,
        t_end: tend,
    };
    let bench = spec.build(seed).map_err(to_py)?;
    let solver = SolverSpec::parse(scheme, default_inner(inner)).map_err(to_py)?;
    solver.validate().map_err(to_py)?;
    let param = solver_param(&solver, step, tol)?;
    run(py, &bench, &solver, param)
}

/// Solve `h' = rhs(t, h)` for a Python callable returning a sequence of
/// floats. An optional `potential(t, h)` enables energy tracing.
#[pyfunction]
#[pyo3(signature = (rhs, h0, t0, tend, scheme = "be", step = None, tol = None, inner = None, potential = None))]
#[allow(clippy::too_many_arguments)]
fn solve_ode(
    py: Python<'_>,
    rhs: Py<PyAny>,
    h0: Vec<f64>,
    t0: f64,
    tend: f64,
    scheme: &str,
    step: Option<f64>,
    tol: Option<f64>,
    inner: Option<PyRef<'_, PyInnerConfig>>,
    potential: Option<Py<PyAny>>,
) -> PyResult<PySolveResult> {
    if h0.is_empty() {
        return Err(ConfigError::new_err("h0 must be non-empty"));
    }
    let dim = h0.len();
    // first Python error raised inside a callback; the solve sees NaNs
    let failure: Arc<Mutex<Option<PyErr>>> = Arc::default();
    let record = {
        let failure = Arc::clone(&failure);
        move |err: PyErr| {
            failure.lock().expect("callback lock").get_or_insert(err);
        }
    };
    let rhs_record = record.clone();
    let mut problem = OdeProblem::new(dim, move |t, h: &State| {
        let out = Python::attach(|py| -> PyResult<Vec<f64>> { rhs.call1(py, (t, h.as_slice().to_vec()))?.extract(py) });
        match out {
            Ok(v) if v.len() == dim => State::from_vec(v),
            Ok(v) => {
                rhs_record(ConfigError::new_err(format!(
                    "rhs returned {} values, expected {dim}",
                    v.len()
                )));
                State::from_element(dim, f64::NAN)
            }
            Err(e) => {
                rhs_record(e);
                State::from_element(dim, f64::NAN)
            }
        }
    });
    if let Some(potential) = potential {
        problem = problem.with_potential(move |t, h: &State| {
            Python::attach(|py| potential.call1(py, (t, h.as_slice().to_vec()))?.extract::<f64>(py)).unwrap_or_else(
                |e| {
                    record(e);
                    f64::NAN
                },
            )
        });
    }
    let bench = BenchmarkProblem {
        name: "user".into(),
        problem,
        t0,
        t_end: tend,
        default_init: State::from_vec(h0),
        stiff: false,
    };
    let solver = SolverSpec::parse(scheme, default_inner(inner)).map_err(to_py)?;
    solver.validate().map_err(to_py)?;
    let param = solver_param(&solver, step, tol)?;
    let outcome = run(py, &bench, &solver, param);
    if let Some(err) = failure.lock().expect("callback lock").take() {
        return Err(err);
    }
    outcome
}

fn parse_method(method: &str) -> PyResult<StabilityMethod> {
    StabilityMethod::parse(method).map_err(to_py)
}

/// Whether `z = re + i im` lies in the absolute stability domain of
/// `method` (`fe`, `be`, `cn`, `dopri5`).
#[pyfunction]
fn in_stability_domain(method: &str, re: f64, im: f64) -> PyResult<bool> {
    Ok(stability::in_stability_domain(parse_method(method)?, Complex64::new(re, im)).inside)
}

/// `(re, im, inside)` on a `resolution x resolution` grid.
#[pyfunction]
fn stability_raster(
    method: &str,
    re_range: (f64, f64),
    im_range: (f64, f64),
    resolution: usize,
) -> PyResult<Vec<(f64, f64, bool)>> {
    stability::stability_raster(parse_method(method)?, re_range, im_range, resolution).map_err(to_py)
}

/// Returns `(ratio, zero_mode, stiff)`.
#[pyfunction]
fn stiffness_ratio(real_parts: Vec<f64>) -> PyResult<(f64, bool, bool)> {
    let rep = stability::stiffness_ratio(&real_parts).map_err(to_py)?;
    Ok((rep.ratio, rep.zero_mode, rep.stiff))
}

/// Exact solution of the periodic diffusion benchmark at time `t`.
#[pyfunction]
fn exact_diffusion_solution(h0: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
    if h0.len() < 2 {
        return Err(ConfigError::new_err("need at least two grid points"));
    }
    Ok(exact_diffusion(&State::from_vec(h0), t).as_slice().to_vec())
}

/// Observed order of accuracy of a solver on a benchmark.
#[pyfunction]
#[pyo3(signature = (scheme, steps, benchmark = "scalar", inner = None, n = 128, seed = DEFAULT_SEED))]
fn convergence_order(
    py: Python<'_>,
    scheme: &str,
    steps: Vec<f64>,
    benchmark: &str,
    inner: Option<PyRef<'_, PyInnerConfig>>,
    n: usize,
    seed: u64,
) -> PyResult<f64> {
    let spec = BenchmarkSpec {
        kind: BenchmarkKind::parse(benchmark).map_err(to_py)?,
        n,
        ..BenchmarkSpec::default()
    };
    let bench = spec.build(seed).map_err(to_py)?;
    let solver = SolverSpec::parse(scheme, default_inner(inner)).map_err(to_py)?;
    let est = py.detach(|| order_of(&bench, &solver, &steps)).map_err(to_py)?;
    Ok(est.order)
}

fn row_dict<'py>(py: Python<'py>, row: &Row) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("solver", &row.solver)?;
    d.set_item("param", row.param)?;
    d.set_item("final_error", row.final_error)?;
    d.set_item("nfe", row.nfe)?;
    d.set_item("wall_time_ns", row.wall_time_ns)?;
    d.set_item("inner_iter_total", row.inner_iter_total)?;
    d.set_item("accepted", row.accepted)?;
    d.set_item("rejected", row.rejected)?;
    d.set_item("status", &row.status)?;
    Ok(d)
}

/// Run a sweep described by flat TOML text; returns one dict per row.
#[pyfunction]
fn sweep<'py>(py: Python<'py>, config: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let job = RunConfig::from_toml(config)
        .and_then(RunConfig::into_job)
        .map_err(to_py)?;
    let report = py.detach(|| run_sweep(&job.spec)).map_err(to_py)?;
    report.rows.iter().map(|r| row_dict(py, r)).collect()
}

type BackendOutput<'py> = (Vec<Bound<'py, PyDict>>, Vec<(usize, f64)>);

/// Backward Euler through the FR, fixed-point and Newton backends on
/// diffusion; returns `(rows, [(n, max disagreement)])`.
#[pyfunction]
#[pyo3(signature = (grid_sizes = vec![16, 32, 64, 128, 256, 512], step = 1e-7, steps = 10, tol = 1e-10))]
fn compare_backends<'py>(
    py: Python<'py>,
    grid_sizes: Vec<usize>,
    step: f64,
    steps: usize,
    tol: f64,
) -> PyResult<BackendOutput<'py>> {
    let spec = BackendSpec {
        grid_sizes,
        step,
        steps,
        tol,
        ..BackendSpec::default()
    };
    let cmp = py.detach(|| compare_implicit_backends(&spec)).map_err(to_py)?;
    let rows = cmp
        .report
        .rows
        .iter()
        .map(|r| row_dict(py, r))
        .collect::<PyResult<_>>()?;
    Ok((rows, cmp.disagreement))
}

#[pymodule]
fn pyproxode(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("ProxodeError", py.get_type::<ProxodeError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("SolverError", py.get_type::<SolverError>())?;
    m.add_class::<PyInnerConfig>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(solve_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ode, m)?)?;
    m.add_function(wrap_pyfunction!(in_stability_domain, m)?)?;
    m.add_function(wrap_pyfunction!(stability_raster, m)?)?;
    m.add_function(wrap_pyfunction!(stiffness_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(exact_diffusion_solution, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_order, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(compare_backends, m)?)?;
    Ok(())
}
