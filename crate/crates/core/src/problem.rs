//! Problem definitions, NFE instrumentation and solve records shared by every solver.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State of the system at one time.
pub type State = DVector<f64>;

pub type RhsFn = dyn Fn(f64, &State) -> State + Send + Sync;
pub type PotentialFn = dyn Fn(f64, &State) -> f64 + Send + Sync;
pub type JacobianFn = dyn Fn(f64, &State) -> DMatrix<f64> + Send + Sync;
pub type ExactFn = dyn Fn(f64) -> State + Send + Sync;

/// An initial value problem `h' = f(t, h)`.
///
/// Only `rhs` is required. A potential `F` with `f = -grad F` enables energy
/// tracing, a jacobian enables the Newton backend, and an exact solution lets
/// benchmarks report errors. Evaluators are shared read-only, so one problem
/// can back several concurrent solves.
#[derive(Clone)]
pub struct OdeProblem {
    dim: usize,
    rhs: Arc<RhsFn>,
    potential: Option<Arc<PotentialFn>>,
    jacobian: Option<Arc<JacobianFn>>,
    exact: Option<Arc<ExactFn>>,
    params: Vec<f64>,
}

impl OdeProblem {
    pub fn new<F>(dim: usize, rhs: F) -> Self
    where
        F: Fn(f64, &State) -> State + Send + Sync + 'static,
    {
        assert!(dim > 0, "problem dimension must be positive");
        Self {
            dim,
            rhs: Arc::new(rhs),
            potential: None,
            jacobian: None,
            exact: None,
            params: Vec::new(),
        }
    }

    pub fn with_potential<F>(mut self, potential: F) -> Self
    where
        F: Fn(f64, &State) -> f64 + Send + Sync + 'static,
    {
        self.potential = Some(Arc::new(potential));
        self
    }

    pub fn with_jacobian<F>(mut self, jacobian: F) -> Self
    where
        F: Fn(f64, &State) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_exact<F>(mut self, exact: F) -> Self
    where
        F: Fn(f64) -> State + Send + Sync + 'static,
    {
        self.exact = Some(Arc::new(exact));
        self
    }

    /// Attach a fixed parameter block. Solvers never read it; it is kept for
    /// bookkeeping and reporting.
    pub fn with_params(mut self, params: Vec<f64>) -> Self {
        self.params = params;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn has_potential(&self) -> bool {
        self.potential.is_some()
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Evaluate `f(t, h)` without touching any NFE counter. Solvers go through
    /// [`InstrumentedRhs`]; this is for oracles, validation and diagnostics.
    pub fn rhs_uncounted(&self, t: f64, h: &State) -> State {
        (self.rhs)(t, h)
    }

    pub fn potential(&self, t: f64, h: &State) -> Result<f64> {
        self.potential.as_ref().map(|p| p(t, h)).ok_or(Error::MissingPotential)
    }

    pub fn jacobian(&self, t: f64, h: &State) -> Result<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(t, h)).ok_or(Error::MissingJacobian)
    }

    pub fn exact(&self, t: f64) -> Result<State> {
        self.exact.as_ref().map(|e| e(t)).ok_or(Error::MissingExact)
    }

    pub fn check_state(&self, h: &State) -> Result<()> {
        if h.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: h.len(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for OdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeProblem")
            .field("dim", &self.dim)
            .field("potential", &self.potential.is_some())
            .field("jacobian", &self.jacobian.is_some())
            .field("exact", &self.exact.is_some())
            .field("params", &self.params)
            .finish()
    }
}

/// Right-hand side wrapper that counts evaluations (NFE).
///
/// Each solve owns its own instance; the counter only ever increases.
#[derive(Debug)]
pub struct InstrumentedRhs<'a> {
    problem: &'a OdeProblem,
    nfe: u64,
}

impl<'a> InstrumentedRhs<'a> {
    pub fn new(problem: &'a OdeProblem) -> Self {
        Self { problem, nfe: 0 }
    }

    pub fn eval(&mut self, t: f64, h: &State) -> State {
        self.nfe += 1;
        (self.problem.rhs)(t, h)
    }

    /// Evaluate and reject non-finite output.
    pub fn eval_finite(&mut self, t: f64, h: &State) -> Result<State> {
        let out = self.eval(t, h);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Divergence { t })
        }
    }

    pub fn nfe(&self) -> u64 {
        self.nfe
    }

    pub fn problem(&self) -> &'a OdeProblem {
        self.problem
    }

    pub fn dim(&self) -> usize {
        self.problem.dim
    }
}

/// Euclidean norm.
pub fn l2_norm(v: &State) -> f64 {
    v.norm()
}

pub(crate) fn all_finite(v: &State) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Outcome of a trajectory computation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub nfe_total: u64,
    /// Inner iterations per outer step (summed over stages).
    pub inner_iterations: Vec<usize>,
    /// Implicit-equation residual per outer step, in the form
    /// `|| a h_{k+1} - A(history) - s f(h_{k+1}) ||`.
    pub residuals: Vec<f64>,
    pub energy_trace: Option<Vec<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Steps accepted despite inner non-convergence (permissive mode only).
    pub flagged_steps: Vec<usize>,
}

impl SolveResult {
    pub fn final_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn final_state(&self) -> Option<State> {
        self.states.last().map(|s| State::from_vec(s.clone()))
    }

    pub fn state(&self, k: usize) -> State {
        State::from_vec(self.states[k].clone())
    }

    pub fn inner_iterations_total(&self) -> usize {
        self.inner_iterations.iter().sum()
    }

    pub(crate) fn push(&mut self, t: f64, h: &State) {
        self.times.push(t);
        self.states.push(h.as_slice().to_vec());
    }

    /// `|| h(T) - exact(T) ||` against the problem's oracle.
    pub fn final_error(&self, problem: &OdeProblem) -> Result<f64> {
        let t = self
            .final_time()
            .ok_or_else(|| Error::InvalidConfig("empty trajectory has no final error".into()))?;
        let h = self.final_state().expect("non-empty");
        Ok((h - problem.exact(t)?).norm())
    }
}

/// One failing sample of [`validate_gradient_consistency`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMismatch {
    pub sample: usize,
    pub finite_difference: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub samples: usize,
    pub failures: Vec<GradientMismatch>,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Check `f = -grad F` at random points along random unit directions with
/// central differences: `|dF_v + <f, v>| <= tol (1 + |<f, v>|)`.
///
/// Uses uncounted rhs evaluations.
pub fn validate_gradient_consistency(
    problem: &OdeProblem,
    t: f64,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<GradientReport> {
    if !problem.has_potential() {
        return Err(Error::MissingPotential);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = problem.dim();
    let mut failures = Vec::new();
    for sample in 0..samples {
        let h = State::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut v = State::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let vn = v.norm();
        if vn == 0.0 {
            continue;
        }
        v /= vn;
        let delta = 1e-5 * (1.0 + h.norm());
        let fp = problem.potential(t, &(&h + &v * delta))?;
        let fm = problem.potential(t, &(&h - &v * delta))?;
        let fd = (fp - fm) / (2.0 * delta);
        let expected = -problem.rhs_uncounted(t, &h).dot(&v);
        if (fd - expected).abs() > tol * (1.0 + expected.abs()) {
            failures.push(GradientMismatch {
                sample,
                finite_difference: fd,
                expected,
            });
        }
    }
    Ok(GradientReport { samples, failures })
}
