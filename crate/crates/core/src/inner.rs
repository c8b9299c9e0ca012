//! Inner solvers for one implicit step.
//!
//! Every proximal scheme reduces one outer step to minimizing
//!
//! ```text
//! G(z) = sum_j c_j/2 ||z - y_j||^2 + s F(z) - s <z, g0>
//! ```
//!
//! whose gradient is `g(z) = sum_j c_j (z - y_j) - s f(z, t*) + s g0`. The
//! quadratic part is written un-normalized by the outer step `s`, so the
//! gradient coincides with the implicit-equation residual
//! `a h_{k+1} - A(history) - s f(h_{k+1})` and the optimizer step `eta` is
//! measured against a Hessian `sum_j c_j I - s J_f` whose scale does not blow
//! up as `s -> 0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{all_finite, InstrumentedRhs, State};

/// Iterates whose norm exceeds this multiple of the starting norm abort.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// Newton is a dense baseline; larger systems are refused.
pub const NEWTON_MAX_DIM: usize = 2048;

pub const DEFAULT_MAX_ITER: usize = 500;

/// Quadratic penalty terms and offsets that define one inner objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxWeights {
    /// `(c_j, y_j)` pairs.
    pub anchors: Vec<(f64, State)>,
    /// Constant gradient offset `g0` (Crank-Nicolson uses `-f(h_k, t_k)`).
    pub shift: Option<State>,
    /// Time at which `f` is evaluated inside the objective.
    pub eval_time: f64,
    /// Outer step size.
    pub step: f64,
}

impl ProxWeights {
    pub fn new(anchors: Vec<(f64, State)>, eval_time: f64, step: f64) -> Self {
        Self {
            anchors,
            shift: None,
            eval_time,
            step,
        }
    }

    pub fn with_shift(mut self, shift: State) -> Self {
        self.shift = Some(shift);
        self
    }

    /// `(z - h_k)/s - f(z)`: one anchor with unit weight.
    pub fn backward_euler(h_k: &State, step: f64, t_next: f64) -> Self {
        Self::new(vec![(1.0, h_k.clone())], t_next, step)
    }

    /// Trapezoidal rule. `f_k` is `f(h_k, t_k)`, already evaluated by the caller.
    pub fn crank_nicolson(h_k: &State, f_k: &State, step: f64, t_next: f64) -> Self {
        Self::new(vec![(2.0, h_k.clone())], t_next, step).with_shift(-f_k)
    }

    /// BDF weights for `history = [h_k, h_{k-1}, ...]` (newest first).
    pub fn bdf(order: usize, history: &[State], step: f64, t_next: f64) -> Result<Self> {
        let coeffs = bdf_coefficients(order)?;
        if history.len() < coeffs.len() {
            return Err(Error::InsufficientHistory {
                need: coeffs.len(),
                have: history.len(),
            });
        }
        let anchors = coeffs.iter().zip(history).map(|(&c, h)| (c, h.clone())).collect();
        Ok(Self::new(anchors, t_next, step))
    }

    pub fn dim(&self) -> usize {
        self.anchors.first().map_or(0, |(_, y)| y.len())
    }

    /// `sum_j c_j`, the `a` in `a h_{k+1} = A(history) + s f(h_{k+1})`.
    pub fn weight_sum(&self) -> f64 {
        self.anchors.iter().map(|(c, _)| c).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(Error::InvalidConfig("inner objective has no anchors".into()));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "outer step must be positive, got {}",
                self.step
            )));
        }
        let d = self.dim();
        if let Some(bad) = self.anchors.iter().find(|(_, y)| y.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.1.len(),
            });
        }
        if !(self.weight_sum() > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "anchor weights must have a positive sum, got {}",
                self.weight_sum()
            )));
        }
        Ok(())
    }

    /// `sum_j c_j y_j - s g0`, the part of the gradient that does not depend on `z`.
    fn offset(&self) -> State {
        let mut acc = State::zeros(self.dim());
        for (c, y) in &self.anchors {
            acc.axpy(*c, y, 1.0);
        }
        if let Some(g0) = &self.shift {
            acc.axpy(-self.step, g0, 1.0);
        }
        acc
    }
}

/// `(c_0, c_1, ...)` multiplying `(h_k, h_{k-1}, ...)` in the proximal BDF objective.
pub fn bdf_coefficients(order: usize) -> Result<&'static [f64]> {
    const BDF1: [f64; 1] = [1.0];
    const BDF2: [f64; 2] = [2.0, -0.5];
    const BDF3: [f64; 3] = [3.0, -1.5, 1.0 / 3.0];
    const BDF4: [f64; 4] = [4.0, -3.0, 4.0 / 3.0, -0.25];
    match order {
        1 => Ok(&BDF1),
        2 => Ok(&BDF2),
        3 => Ok(&BDF3),
        4 => Ok(&BDF4),
        _ => Err(Error::InvalidConfig(format!("unsupported BDF order {order}"))),
    }
}

/// Gradient of the inner objective with a precomputed offset.
struct InnerObjective<'w> {
    weights: &'w ProxWeights,
    weight_sum: f64,
    offset: State,
}

impl<'w> InnerObjective<'w> {
    fn new(weights: &'w ProxWeights) -> Self {
        Self {
            weights,
            weight_sum: weights.weight_sum(),
            offset: weights.offset(),
        }
    }

    /// One counted rhs evaluation.
    fn gradient(&self, z: &State, rhs: &mut InstrumentedRhs<'_>) -> Result<State> {
        let f = rhs.eval_finite(self.weights.eval_time, z)?;
        Ok(self.combine(z, &f))
    }

    fn combine(&self, z: &State, f: &State) -> State {
        let mut g = z * self.weight_sum - &self.offset;
        g.axpy(-self.weights.step, f, 1.0);
        g
    }

    /// `z <- (offset + s f(z)) / sum c`.
    fn fixed_point_map(&self, z: &State, rhs: &mut InstrumentedRhs<'_>) -> Result<State> {
        let f = rhs.eval_finite(self.weights.eval_time, z)?;
        let mut next = self.offset.clone();
        next.axpy(self.weights.step, &f, 1.0);
        Ok(next / self.weight_sum)
    }
}

/// Gradient of the inner objective at `z`. Consumes exactly one rhs evaluation.
pub fn prox_gradient(weights: &ProxWeights, z: &State, rhs: &mut InstrumentedRhs<'_>) -> Result<State> {
    InnerObjective::new(weights).gradient(z, rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMethod {
    Gd,
    Nag,
    NagRestart,
    Fr,
    FixedPoint,
    Newton,
}

impl InnerMethod {
    pub fn name(self) -> &'static str {
        match self {
            InnerMethod::Gd => "gd",
            InnerMethod::Nag => "nag",
            InnerMethod::NagRestart => "nag-restart",
            InnerMethod::Fr => "fr",
            InnerMethod::FixedPoint => "fp",
            InnerMethod::Newton => "newton",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "gd" => InnerMethod::Gd,
            "nag" => InnerMethod::Nag,
            "nag-restart" | "restart" => InnerMethod::NagRestart,
            "fr" => InnerMethod::Fr,
            "fp" | "fixed-point" => InnerMethod::FixedPoint,
            "newton" | "nr" => InnerMethod::Newton,
            other => return Err(Error::InvalidConfig(format!("unknown inner solver '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub method: InnerMethod,
    pub eta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub restart_period: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            method: InnerMethod::Fr,
            eta: 0.1,
            tol: 5e-9,
            max_iter: DEFAULT_MAX_ITER,
            restart_period: 10,
        }
    }
}

impl InnerConfig {
    pub fn new(method: InnerMethod, eta: f64, tol: f64) -> Self {
        Self {
            method,
            eta,
            tol,
            ..Self::default()
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_restart_period(mut self, period: usize) -> Self {
        self.restart_period = period;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "inner tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if self.restart_period == 0 {
            return Err(Error::InvalidConfig("restart period must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub z_star: State,
    pub iterations: usize,
    /// `||z^{i+1} - z^i||` at exit.
    pub last_increment: f64,
    pub converged: bool,
    /// Stopped because of non-finite values or the divergence guard.
    pub diverged: bool,
}

pub fn gd_step(z: &State, g: &State, eta: f64) -> State {
    z - g * eta
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrUpdate {
    pub z_next: State,
    pub p: State,
    pub beta: f64,
}

/// Gradient descent with Fletcher-Reeves momentum.
///
/// `g_prev` is `None` on the first iteration (`beta = 0`, `p = g`). Returns
/// `None` if the previous gradient vanished: the previous iterate was already
/// stationary.
pub fn fr_step(z: &State, p_prev: &State, g_prev: Option<&State>, g: &State, eta: f64) -> Option<FrUpdate> {
    let beta = match g_prev {
        None => 0.0,
        Some(gp) => {
            let denom = gp.norm_squared();
            if denom == 0.0 {
                return None;
            }
            g.norm_squared() / denom
        }
    };
    let p = if beta == 0.0 { g.clone() } else { g + p_prev * beta };
    let z_next = z - &p * eta;
    Some(FrUpdate { z_next, p, beta })
}

/// Nesterov momentum factor `(i - 1)/(i + 2)`.
pub fn nag_momentum(i: usize) -> f64 {
    (i as f64 - 1.0) / (i as f64 + 2.0)
}

/// Momentum index for the restarted variant.
pub fn restart_index(i: usize, period: usize) -> usize {
    i % period
}

/// One Nesterov step: `w' = z - eta g`, `z' = w' + m (w' - w)`. Returns `(w', z')`.
pub fn nag_step(w_prev: &State, z: &State, g: &State, eta: f64, momentum: f64) -> (State, State) {
    let w_next = z - g * eta;
    let z_next = &w_next + (&w_next - w_prev) * momentum;
    (w_next, z_next)
}

/// Iterate the configured optimizer from `z0` until `||z^{i+1} - z^i|| <= tol`.
///
/// Consumes exactly `iterations` rhs evaluations. Non-convergence and
/// divergence are reported through the result flags, not as errors.
pub fn run_inner(
    weights: &ProxWeights,
    z0: &State,
    cfg: &InnerConfig,
    rhs: &mut InstrumentedRhs<'_>,
) -> Result<InnerResult> {
    cfg.validate()?;
    weights.validate()?;
    if z0.len() != weights.dim() {
        return Err(Error::DimensionMismatch {
            expected: weights.dim(),
            got: z0.len(),
        });
    }
    if cfg.method == InnerMethod::Newton {
        return newton_solve(weights, z0, cfg.tol, cfg.max_iter, rhs);
    }

    let objective = InnerObjective::new(weights);
    let limit = DIVERGENCE_FACTOR * z0.norm().max(1.0);
    let mut z = z0.clone();
    let mut last_increment = f64::INFINITY;

    // optimizer memory
    let mut p = State::zeros(z0.len());
    let mut g_prev: Option<State> = None;
    let mut w_prev = z0.clone();

    for i in 0..cfg.max_iter {
        let iterations = i + 1;
        let step = match cfg.method {
            InnerMethod::FixedPoint => objective.fixed_point_map(&z, rhs).map(Some),
            _ => objective.gradient(&z, rhs).map(|g| match cfg.method {
                InnerMethod::Gd => Some(gd_step(&z, &g, cfg.eta)),
                InnerMethod::Fr => {
                    let update = fr_step(&z, &p, g_prev.as_ref(), &g, cfg.eta);
                    g_prev = Some(g);
                    update.map(|u| {
                        p = u.p;
                        u.z_next
                    })
                }
                InnerMethod::Nag | InnerMethod::NagRestart => {
                    let index = if cfg.method == InnerMethod::NagRestart {
                        restart_index(i, cfg.restart_period)
                    } else {
                        i
                    };
                    let (w, z_next) = nag_step(&w_prev, &z, &g, cfg.eta, nag_momentum(index));
                    w_prev = w;
                    Some(z_next)
                }
                InnerMethod::FixedPoint | InnerMethod::Newton => unreachable!(),
            }),
        };
        let next = match step {
            Ok(Some(next)) => next,
            // previous gradient was exactly zero: z is stationary
            Ok(None) => {
                return Ok(InnerResult {
                    z_star: z,
                    iterations,
                    last_increment: 0.0,
                    converged: true,
                    diverged: false,
                })
            }
            Err(Error::Divergence { .. }) => return Ok(diverged(z, iterations)),
            Err(e) => return Err(e),
        };
        if !all_finite(&next) || next.norm() > limit {
            return Ok(diverged(next, iterations));
        }
        last_increment = (&next - &z).norm();
        z = next;
        if last_increment <= cfg.tol {
            return Ok(InnerResult {
                z_star: z,
                iterations,
                last_increment,
                converged: true,
                diverged: false,
            });
        }
    }
    Ok(InnerResult {
        z_star: z,
        iterations: cfg.max_iter,
        last_increment,
        converged: false,
        diverged: false,
    })
}

fn diverged(z: State, iterations: usize) -> InnerResult {
    InnerResult {
        z_star: z,
        iterations,
        last_increment: f64::INFINITY,
        converged: false,
        diverged: true,
    }
}

/// Fixed-point iteration `z <- (sum c_j y_j + s (f(z) - g0)) / sum c_j`; for
/// backward Euler weights this is `z <- h_k + s f(z)`.
pub fn fixed_point_solve(
    weights: &ProxWeights,
    z0: &State,
    tol: f64,
    max_iter: usize,
    rhs: &mut InstrumentedRhs<'_>,
) -> Result<InnerResult> {
    let cfg = InnerConfig {
        method: InnerMethod::FixedPoint,
        eta: 1.0,
        tol,
        max_iter,
        restart_period: 1,
    };
    run_inner(weights, z0, &cfg, rhs)
}

/// Newton's method on `r(z) = sum c_j (z - y_j) - s (f(z) - g0)` with the
/// dense Jacobian `sum c_j I - s J_f`, stopping once `||r(z)|| <= tol`.
///
/// `iterations` counts Newton updates. Every residual evaluation costs one
/// rhs call; jacobian evaluations are not counted as NFE.
pub fn newton_solve(
    weights: &ProxWeights,
    z0: &State,
    tol: f64,
    max_iter: usize,
    rhs: &mut InstrumentedRhs<'_>,
) -> Result<InnerResult> {
    weights.validate()?;
    let d = weights.dim();
    if d > NEWTON_MAX_DIM {
        return Err(Error::InvalidConfig(format!(
            "newton backend is limited to dimension {NEWTON_MAX_DIM}, got {d}"
        )));
    }
    let problem = rhs.problem();
    if !problem.has_jacobian() {
        return Err(Error::MissingJacobian);
    }
    let objective = InnerObjective::new(weights);
    let t = weights.eval_time;
    let mut z = z0.clone();
    let mut last_increment = f64::INFINITY;
    for updates in 0..=max_iter {
        let r = match objective.gradient(&z, rhs) {
            Ok(r) => r,
            Err(Error::Divergence { .. }) => return Ok(diverged(z, updates)),
            Err(e) => return Err(e),
        };
        if r.norm() <= tol {
            return Ok(InnerResult {
                z_star: z,
                iterations: updates,
                last_increment: if updates == 0 { 0.0 } else { last_increment },
                converged: true,
                diverged: false,
            });
        }
        if updates == max_iter {
            break;
        }
        let jac = problem.jacobian(t, &z)?;
        let system = DMatrix::identity(d, d) * objective.weight_sum - jac * weights.step;
        let delta = system.lu().solve(&r).ok_or(Error::SingularJacobian)?;
        if !all_finite(&delta) {
            return Err(Error::SingularJacobian);
        }
        last_increment = delta.norm();
        z -= delta;
    }
    Ok(InnerResult {
        z_star: z,
        iterations: max_iter,
        last_increment,
        converged: false,
        diverged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::OdeProblem;

    fn scalar(x: f64) -> State {
        State::from_element(1, x)
    }

    fn decay() -> OdeProblem {
        OdeProblem::new(1, |_, h| -h).with_jacobian(|_, _| DMatrix::from_element(1, 1, -1.0))
    }

    #[test]
    fn gradient_backward_euler_scalar() {
        let p = decay();
        let mut rhs = InstrumentedRhs::new(&p);
        let w = ProxWeights::backward_euler(&scalar(1.0), 1.0, 1.0);
        let g = prox_gradient(&w, &scalar(1.0), &mut rhs).unwrap();
        assert_eq!(g[0], 1.0);
        assert_eq!(rhs.nfe(), 1);
    }

    #[test]
    fn gradient_bdf2_matches_divided_difference_form() {
        // (3/2 z - 2 h_k + 1/2 h_{k-1}) - s f(z)
        let p = decay();
        let mut rhs = InstrumentedRhs::new(&p);
        let s = 0.3;
        let hist = [scalar(0.7), scalar(1.1)];
        let w = ProxWeights::bdf(2, &hist, s, 0.0).unwrap();
        let z = scalar(0.4);
        let g = prox_gradient(&w, &z, &mut rhs).unwrap();
        let expected = 2.0 * (0.4 - 0.7) - 0.5 * (0.4 - 1.1) + s * 0.4;
        assert!((g[0] - expected).abs() < 1e-15);
        let alt = 1.5 * 0.4 - (2.0 * 0.7 - 0.5 * 1.1) + s * 0.4;
        assert!((g[0] - alt).abs() < 1e-15);
    }

    #[test]
    fn gradient_crank_nicolson_root_is_trapezoidal() {
        // root of 2(z - 1) - s f(z) - s f(1) with f = -z, s = 1 is z = 1/3
        let p = decay();
        let mut rhs = InstrumentedRhs::new(&p);
        let fk = p.rhs_uncounted(0.0, &scalar(1.0));
        let w = ProxWeights::crank_nicolson(&scalar(1.0), &fk, 1.0, 1.0);
        let g = prox_gradient(&w, &scalar(1.0 / 3.0), &mut rhs).unwrap();
        assert!(g[0].abs() < 1e-15);
    }

    #[test]
    fn bdf4_weights_sum_to_a4() {
        let sum: f64 = bdf_coefficients(4).unwrap().iter().sum();
        assert!((sum - 25.0 / 12.0).abs() < 1e-15);
        let sum3: f64 = bdf_coefficients(3).unwrap().iter().sum();
        assert!((sum3 - 11.0 / 6.0).abs() < 1e-15);
        let sum2: f64 = bdf_coefficients(2).unwrap().iter().sum();
        assert_eq!(sum2, 1.5);
    }

    #[test]
    fn gd_step_examples() {
        assert!((gd_step(&scalar(1.0), &scalar(1.0), 0.1)[0] - 0.9).abs() < 1e-15);
        assert_eq!(gd_step(&scalar(3.0), &scalar(0.0), 0.7)[0], 3.0);
        let z = State::from_vec(vec![2.0, 0.0]);
        let g = State::from_vec(vec![1.0, -1.0]);
        assert_eq!(gd_step(&z, &g, 0.5), State::from_vec(vec![1.5, 0.5]));
    }

    #[test]
    fn fr_step_examples() {
        let z = State::from_vec(vec![1.0, 1.0]);
        let g = State::from_vec(vec![0.0, 2.0]);
        let first = fr_step(&z, &State::zeros(2), None, &g, 0.1).unwrap();
        assert_eq!(first.beta, 0.0);
        assert_eq!(first.z_next, gd_step(&z, &g, 0.1));

        let same = fr_step(&z, &g, Some(&g), &g, 0.1).unwrap();
        assert_eq!(same.beta, 1.0);

        let gp = State::from_vec(vec![1.0, 1.0]);
        let u = fr_step(&z, &gp, Some(&gp), &g, 0.1).unwrap();
        assert_eq!(u.beta, 2.0);
        assert_eq!(u.p, State::from_vec(vec![2.0, 4.0]));

        assert!(fr_step(&z, &gp, Some(&State::zeros(2)), &g, 0.1).is_none());
    }

    #[test]
    fn nag_momentum_examples() {
        assert_eq!(nag_momentum(0), -0.5);
        assert_eq!(nag_momentum(1), 0.0);
        for i in 0..20 {
            assert_eq!(nag_momentum(restart_index(i, 1)), -0.5);
        }
        let z = scalar(2.0);
        let (w, zn) = nag_step(&z, &z, &scalar(0.0), 0.1, nag_momentum(5));
        assert_eq!((w[0], zn[0]), (2.0, 2.0));
    }

    #[test]
    fn every_optimizer_finds_backward_euler_root() {
        let p = decay();
        let w = ProxWeights::backward_euler(&scalar(1.0), 1.0, 1.0);
        for method in [
            InnerMethod::Gd,
            InnerMethod::Nag,
            InnerMethod::NagRestart,
            InnerMethod::Fr,
            InnerMethod::FixedPoint,
            InnerMethod::Newton,
        ] {
            let mut rhs = InstrumentedRhs::new(&p);
            let cfg = InnerConfig::new(method, 0.1, 1e-10).with_max_iter(5000);
            let res = run_inner(&w, &scalar(1.0), &cfg, &mut rhs);
            if method == InnerMethod::FixedPoint {
                // contraction factor s L = 1: stalls
                assert!(!res.unwrap().converged);
                continue;
            }
            let res = res.unwrap();
            assert!(res.converged, "{method:?}");
            assert!((res.z_star[0] - 0.5).abs() < 1e-8, "{method:?}: {}", res.z_star[0]);
            if method != InnerMethod::Newton {
                assert_eq!(rhs.nfe() as usize, res.iterations, "{method:?}");
            }
        }
    }

    #[test]
    fn start_at_root_takes_one_iteration() {
        let p = decay();
        let mut rhs = InstrumentedRhs::new(&p);
        let w = ProxWeights::backward_euler(&scalar(1.0), 1.0, 1.0);
        let cfg = InnerConfig::new(InnerMethod::Gd, 0.1, 1e-12);
        let res = run_inner(&w, &scalar(0.5), &cfg, &mut rhs).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.last_increment, 0.0);
        assert!(res.converged);
    }

    #[test]
    fn large_eta_diverges() {
        // Hessian 1 + s*lambda = 1001; eta * 1001 > 2
        let lam = 1000.0;
        let p = OdeProblem::new(1, move |_, h| -h * lam);
        let mut rhs = InstrumentedRhs::new(&p);
        let w = ProxWeights::backward_euler(&scalar(1.0), 1.0, 1.0);
        let cfg = InnerConfig::new(InnerMethod::Gd, 0.01, 1e-10).with_max_iter(10_000);
        let res = run_inner(&w, &scalar(1.0), &cfg, &mut rhs).unwrap();
        assert!(!res.converged);
        assert!(res.diverged);
    }

    #[test]
    fn max_iter_exhaustion() {
        let p = decay();
        let mut rhs = InstrumentedRhs::new(&p);
        let w = ProxWeights::backward_euler(&scalar(1.0), 1.0, 1.0);
        let cfg = InnerConfig::new(InnerMethod::Gd, 0.01, 1e-14).with_max_iter(3);
        let res = run_inner(&w, &scalar(1.0), &cfg, &mut rhs).unwrap();
        assert!(!res.converged && !res.diverged);
        assert_eq!(res.iterations, 3);
        assert_eq!(rhs.nfe(), 3);
    }

    #[test]
    fn fixed_point_examples() {
        let p = decay();
        let w = ProxWeights::backward_euler(&scalar(1.0), 0.5, 0.5);
        let mut rhs = InstrumentedRhs::new(&p);
        let res = fixed_point_solve(&w, &scalar(1.0), 1e-12, 500, &mut rhs).unwrap();
        assert!(res.converged);
        assert!((res.z_star[0] - 2.0 / 3.0).abs() < 1e-11);

        let w = ProxWeights::backward_euler(&scalar(1.0), 2.0, 2.0);
        let mut rhs = InstrumentedRhs::new(&p);
        let res = fixed_point_solve(&w, &scalar(1.0), 1e-12, 500, &mut rhs).unwrap();
        assert!(!res.converged);

        let zero = OdeProblem::new(1, |_, h| h * 0.0);
        let w = ProxWeights::backward_euler(&scalar(1.0), 0.5, 0.5);
        let mut rhs = InstrumentedRhs::new(&zero);
        let res = fixed_point_solve(&w, &scalar(1.0), 1e-12, 500, &mut rhs).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.z_star[0], 1.0);
    }

    #[test]
    fn newton_linear_one_update() {
        let lam = 7.0;
        let p = OdeProblem::new(1, move |_, h| -h * lam).with_jacobian(move |_, _| DMatrix::from_element(1, 1, -lam));
        let mut rhs = InstrumentedRhs::new(&p);
        let s = 0.3;
        let w = ProxWeights::backward_euler(&scalar(2.0), s, s);
        let res = newton_solve(&w, &scalar(2.0), 1e-12, 20, &mut rhs).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert!((res.z_star[0] - 2.0 / (1.0 + s * lam)).abs() < 1e-14);
    }

    #[test]
    fn newton_cubic_root() {
        // z + z^3 = 1; bisection oracle
        let p = OdeProblem::new(1, |_, h| h.map(|x| -x * x * x))
            .with_jacobian(|_, h| DMatrix::from_element(1, 1, -3.0 * h[0] * h[0]));
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + mid.powi(3) > 1.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        assert!((lo - 0.682328).abs() < 1e-6);
        let mut rhs = InstrumentedRhs::new(&p);
        let w = ProxWeights::backward_euler(&scalar(1.0), 1.0, 1.0);
        let res = newton_solve(&w, &scalar(1.0), 1e-13, 50, &mut rhs).unwrap();
        assert!(res.converged);
        assert!((res.z_star[0] - lo).abs() < 1e-12);
    }

    #[test]
    fn newton_errors() {
        let p = OdeProblem::new(1, |_, h| -h);
        let w = ProxWeights::backward_euler(&scalar(1.0), 1.0, 1.0);
        let mut rhs = InstrumentedRhs::new(&p);
        assert!(matches!(
            newton_solve(&w, &scalar(1.0), 1e-12, 5, &mut rhs),
            Err(Error::MissingJacobian)
        ));
        // I - s J = 0
        let p = OdeProblem::new(1, |_, h| h.clone()).with_jacobian(|_, _| DMatrix::from_element(1, 1, 1.0));
        let mut rhs = InstrumentedRhs::new(&p);
        assert!(matches!(
            newton_solve(&w, &scalar(1.0), 1e-12, 5, &mut rhs),
            Err(Error::SingularJacobian)
        ));
    }

    #[test]
    fn weights_validation() {
        let w = ProxWeights::new(vec![], 0.0, 1.0);
        assert!(w.validate().is_err());
        let w = ProxWeights::new(vec![(1.0, scalar(0.0)), (-2.0, scalar(0.0))], 0.0, 1.0);
        assert!(w.validate().is_err());
        assert!(matches!(
            ProxWeights::bdf(3, &[scalar(1.0)], 0.1, 0.1),
            Err(Error::InsufficientHistory { need: 3, have: 1 })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(InnerConfig::new(InnerMethod::Gd, 0.0, 1e-3).validate().is_err());
        assert!(InnerConfig::new(InnerMethod::Gd, 0.1, 0.0).validate().is_err());
        assert!(InnerConfig::new(InnerMethod::Gd, 0.1, 1e-3)
            .with_max_iter(0)
            .validate()
            .is_err());
        assert!(InnerConfig::default().validate().is_ok());
    }
}
