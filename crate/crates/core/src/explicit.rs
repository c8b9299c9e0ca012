//! Explicit baselines: forward Euler, Dormand-Prince 5(4) and the Heun-Euler pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::problem::{all_finite, InstrumentedRhs, OdeProblem, SolveResult, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplicitMethod {
    ForwardEuler,
    Heun,
    Dopri5,
}

impl ExplicitMethod {
    /// Right-hand side evaluations per attempted step (no FSAL reuse).
    pub fn evals_per_step(self) -> u64 {
        match self {
            ExplicitMethod::ForwardEuler => 1,
            ExplicitMethod::Heun => 2,
            ExplicitMethod::Dopri5 => 7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExplicitMethod::ForwardEuler => "fe",
            ExplicitMethod::Heun => "heun",
            ExplicitMethod::Dopri5 => "dopri5",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub tol: f64,
    pub s_init: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub max_steps: usize,
}

impl AdaptiveConfig {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            s_init: 1e-3,
            s_min: 1e-12,
            s_max: 0.1,
            max_steps: 10_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if !(self.s_min > 0.0 && self.s_min <= self.s_init && self.s_init <= self.s_max) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < s_min <= s_init <= s_max, got {} / {} / {}",
                self.s_min, self.s_init, self.s_max
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// One attempted step of an embedded pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedStepOutcome {
    /// Propagated solution.
    pub h_high: State,
    /// Embedded comparison solution.
    pub h_low: State,
    pub err: f64,
    /// Proposed next step before clamping.
    pub s_opt: f64,
    pub accepted: bool,
}

pub fn forward_euler_step(h_k: &State, s: f64, t_k: f64, rhs: &mut InstrumentedRhs<'_>) -> Result<State> {
    let f = rhs.eval_finite(t_k, h_k)?;
    Ok(h_k + f * s)
}

// Dormand-Prince tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Weights of the propagated solution.
pub const DOPRI5_HIGH: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// Weights of the embedded solution.
pub const DOPRI5_LOW: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Seven fresh stage evaluations, `k_i = s f(t_k + c_i s, h_k + sum_j a_ij k_j)`.
pub fn dopri5_attempt(
    h_k: &State,
    s: f64,
    t_k: f64,
    tol: f64,
    rhs: &mut InstrumentedRhs<'_>,
) -> Result<EmbeddedStepOutcome> {
    let mut k: Vec<State> = Vec::with_capacity(7);
    for (i, row) in A.iter().enumerate() {
        let mut arg = h_k.clone();
        for (a, kj) in row.iter().zip(&k) {
            if *a != 0.0 {
                arg.axpy(*a, kj, 1.0);
            }
        }
        let t = t_k + C[i] * s;
        k.push(rhs.eval_finite(t, &arg)? * s);
    }
    let combine = |weights: &[f64; 7]| {
        let mut out = h_k.clone();
        for (w, ki) in weights.iter().zip(&k) {
            if *w != 0.0 {
                out.axpy(*w, ki, 1.0);
            }
        }
        out
    };
    let h_high = combine(&DOPRI5_HIGH);
    let h_low = combine(&DOPRI5_LOW);
    if !all_finite(&h_high) || !all_finite(&h_low) {
        return Err(Error::Divergence { t: t_k + s });
    }
    let err = (&h_high - &h_low).norm();
    let s_opt = if err == 0.0 {
        f64::INFINITY
    } else {
        s * (tol * s / (2.0 * err)).powf(0.2)
    };
    Ok(EmbeddedStepOutcome {
        h_high,
        h_low,
        err,
        s_opt,
        accepted: err <= tol,
    })
}

/// Heun (trapezoidal predictor) with an embedded Euler estimate.
pub fn adaptive_heun_attempt(
    h_k: &State,
    s: f64,
    t_k: f64,
    tol: f64,
    rhs: &mut InstrumentedRhs<'_>,
) -> Result<EmbeddedStepOutcome> {
    let k1 = rhs.eval_finite(t_k, h_k)?;
    let h_low = h_k + &k1 * s;
    let k2 = rhs.eval_finite(t_k + s, &h_low)?;
    let h_high = h_k + (k1 + k2) * (0.5 * s);
    let err = (&h_high - &h_low).norm();
    let s_opt = if err == 0.0 {
        f64::INFINITY
    } else {
        0.9 * s * (tol / err).sqrt()
    };
    Ok(EmbeddedStepOutcome {
        h_high,
        h_low,
        err,
        s_opt,
        accepted: err <= tol,
    })
}

fn attempt(
    method: ExplicitMethod,
    h: &State,
    s: f64,
    t: f64,
    tol: f64,
    rhs: &mut InstrumentedRhs<'_>,
) -> Result<EmbeddedStepOutcome> {
    match method {
        ExplicitMethod::Dopri5 => dopri5_attempt(h, s, t, tol, rhs),
        ExplicitMethod::Heun => adaptive_heun_attempt(h, s, t, tol, rhs),
        ExplicitMethod::ForwardEuler => Err(Error::InvalidConfig(
            "forward Euler has no embedded error estimate".into(),
        )),
    }
}

/// Fixed-step integration over `grid`, propagating each method's main solution.
pub fn fixed_step_solve(
    problem: &OdeProblem,
    method: ExplicitMethod,
    grid: &TimeGrid,
    h0: &State,
) -> Result<SolveResult> {
    problem.check_state(h0)?;
    let mut rhs = InstrumentedRhs::new(problem);
    let mut out = SolveResult::default();
    out.push(grid.times[0], h0);
    let mut h = h0.clone();
    for k in 0..grid.steps() {
        let (t, s) = (grid.times[k], grid.gap(k));
        h = match method {
            ExplicitMethod::ForwardEuler => forward_euler_step(&h, s, t, &mut rhs)?,
            _ => attempt(method, &h, s, t, f64::INFINITY, &mut rhs)?.h_high,
        };
        out.push(grid.times[k + 1], &h);
    }
    out.accepted_steps = grid.steps();
    out.nfe_total = rhs.nfe();
    Ok(out)
}

/// Adaptive integration from `t0` to `t_end`.
///
/// A step is accepted iff `err <= tol`. The next step is the method's
/// `s_opt`, clamped to `[max(s_min, s/5), min(s_max, 5 s)]`; the final step
/// is shortened to land on `t_end`. Rejected attempts count towards NFE.
pub fn adaptive_solve(
    problem: &OdeProblem,
    method: ExplicitMethod,
    t0: f64,
    t_end: f64,
    h0: &State,
    cfg: &AdaptiveConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    problem.check_state(h0)?;
    if !(t_end > t0) {
        return Err(Error::InvalidConfig(format!("end time {t_end} must exceed {t0}")));
    }
    let mut rhs = InstrumentedRhs::new(problem);
    let mut out = SolveResult::default();
    out.push(t0, h0);
    let mut h = h0.clone();
    let mut t = t0;
    let mut s = cfg.s_init;
    let mut attempts = 0usize;

    while t < t_end {
        if attempts == cfg.max_steps {
            out.nfe_total = rhs.nfe();
            return Err(Error::MaxStepsExceeded {
                t,
                max_steps: cfg.max_steps,
                partial: Box::new(out),
            });
        }
        attempts += 1;
        let remaining = t_end - t;
        let last = s >= remaining;
        let s_try = if last { remaining } else { s };
        let outcome = attempt(method, &h, s_try, t, cfg.tol, &mut rhs)?;
        let s_next = outcome
            .s_opt
            .clamp(cfg.s_min.max(s_try / 5.0), cfg.s_max.min(5.0 * s_try));

        if outcome.accepted {
            out.accepted_steps += 1;
            t = if last { t_end } else { t + s_try };
            h = outcome.h_high;
            out.push(t, &h);
            // a shortened final step says nothing about the natural step size
            if !last {
                s = s_next;
            }
        } else {
            out.rejected_steps += 1;
            if s_try <= cfg.s_min {
                out.nfe_total = rhs.nfe();
                return Err(Error::StiffnessFailure {
                    t,
                    step: s_try,
                    err: outcome.err,
                    partial: Box::new(out),
                });
            }
            s = s_next;
        }
    }
    out.nfe_total = rhs.nfe();
    Ok(out)
}
