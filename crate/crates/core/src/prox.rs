//! Proximal implicit time stepping: backward Euler, Crank-Nicolson, BDF2-4
//! and single-step multi-stage schemes.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::inner::{run_inner, InnerConfig, InnerResult, ProxWeights};
use crate::problem::{InstrumentedRhs, OdeProblem, SolveResult, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProxScheme {
    BackwardEuler,
    CrankNicolson,
    Bdf2,
    Bdf3,
    Bdf4,
    Multistage2,
    Multistage3,
}

impl ProxScheme {
    pub const ALL: [ProxScheme; 7] = [
        ProxScheme::BackwardEuler,
        ProxScheme::CrankNicolson,
        ProxScheme::Bdf2,
        ProxScheme::Bdf3,
        ProxScheme::Bdf4,
        ProxScheme::Multistage2,
        ProxScheme::Multistage3,
    ];

    /// Number of past states the step consumes.
    pub fn history_depth(self) -> usize {
        match self {
            ProxScheme::Bdf2 => 2,
            ProxScheme::Bdf3 => 3,
            ProxScheme::Bdf4 => 4,
            _ => 1,
        }
    }

    /// Nominal order of accuracy.
    pub fn order(self) -> usize {
        match self {
            ProxScheme::BackwardEuler => 1,
            ProxScheme::CrankNicolson | ProxScheme::Bdf2 | ProxScheme::Multistage2 => 2,
            ProxScheme::Bdf3 | ProxScheme::Multistage3 => 3,
            ProxScheme::Bdf4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProxScheme::BackwardEuler => "be",
            ProxScheme::CrankNicolson => "cn",
            ProxScheme::Bdf2 => "bdf2",
            ProxScheme::Bdf3 => "bdf3",
            ProxScheme::Bdf4 => "bdf4",
            ProxScheme::Multistage2 => "ms2",
            ProxScheme::Multistage3 => "ms3",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "be" | "backward-euler" => ProxScheme::BackwardEuler,
            "cn" | "crank-nicolson" => ProxScheme::CrankNicolson,
            "bdf2" => ProxScheme::Bdf2,
            "bdf3" => ProxScheme::Bdf3,
            "bdf4" => ProxScheme::Bdf4,
            "ms2" | "multistage2" | "multistage-2" => ProxScheme::Multistage2,
            "ms3" | "multistage3" | "multistage-3" => ProxScheme::Multistage3,
            other => return Err(Error::InvalidConfig(format!("unknown scheme '{other}'"))),
        })
    }

    fn bdf_order(self) -> Option<usize> {
        match self {
            ProxScheme::Bdf2 => Some(2),
            ProxScheme::Bdf3 => Some(3),
            ProxScheme::Bdf4 => Some(4),
            _ => None,
        }
    }

    /// Largest quadratic weight sum over the inner problems of one step.
    /// Useful for choosing `eta`.
    pub fn max_weight_sum(self) -> f64 {
        match self {
            ProxScheme::BackwardEuler => 1.0,
            ProxScheme::CrankNicolson => 2.0,
            ProxScheme::Bdf2 => 1.5,
            ProxScheme::Bdf3 => 11.0 / 6.0,
            ProxScheme::Bdf4 => 25.0 / 12.0,
            ProxScheme::Multistage2 => MultiStageTableau::order2().max_row_sum(),
            ProxScheme::Multistage3 => MultiStageTableau::order3().max_row_sum(),
        }
    }
}

/// Lower-triangular coefficients of a proximal multi-stage scheme. Row `m`
/// (1-based stage) holds `gamma_{m,0..m-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStageTableau {
    pub gamma: Vec<Vec<f64>>,
}

impl MultiStageTableau {
    pub fn new(gamma: Vec<Vec<f64>>) -> Result<Self> {
        let tableau = Self { gamma };
        tableau.validate()?;
        Ok(tableau)
    }

    /// One stage with unit weight: proximal backward Euler.
    pub fn backward_euler() -> Self {
        Self { gamma: vec![vec![1.0]] }
    }

    /// Second-order unconditionally stable three-stage scheme.
    pub fn order2() -> Self {
        Self {
            gamma: vec![vec![5.0], vec![-2.0, 6.0], vec![-2.0, 3.0 / 14.0, 44.0 / 7.0]],
        }
    }

    /// Six-stage scheme with published two-decimal coefficients.
    ///
    /// The rounding leaves the scheme only approximately consistent: the
    /// final stage time is `t_k + 0.99813 s` instead of `t_k + s`, so
    /// trajectories carry an O(1e-3) relative drift that does not vanish under
    /// refinement.
    pub fn order3() -> Self {
        Self {
            gamma: vec![
                vec![11.17],
                vec![-7.5, 19.43],
                vec![-1.05, -4.75, 13.98],
                vec![1.8, 0.05, -7.83, 13.8],
                vec![6.2, -7.17, -1.33, 1.63, 11.52],
                vec![-2.83, 4.69, 2.46, -11.55, 6.68, 11.95],
            ],
        }
    }

    pub fn stages(&self) -> usize {
        self.gamma.len()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.gamma.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn max_row_sum(&self) -> f64 {
        self.row_sums().into_iter().fold(f64::MIN, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_empty() {
            return Err(Error::InvalidConfig("tableau has no stages".into()));
        }
        for (m, row) in self.gamma.iter().enumerate() {
            if row.len() != m + 1 {
                return Err(Error::InvalidConfig(format!(
                    "stage {} must have {} coefficients, has {}",
                    m + 1,
                    m + 1,
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "stage {} coefficients sum to {sum}, must be positive",
                    m + 1
                )));
            }
        }
        Ok(())
    }

    /// Relative stage times `c_1..c_M` obtained by applying the scheme to
    /// `t' = 1`: `c_m = (sum_i gamma_{m,i} c_i + 1) / sum_i gamma_{m,i}` with
    /// `c_0 = 0`.
    pub fn stage_times(&self) -> Vec<f64> {
        let mut c = vec![0.0];
        for row in &self.gamma {
            let sum: f64 = row.iter().sum();
            let weighted: f64 = row.iter().zip(&c).map(|(g, ci)| g * ci).sum();
            c.push((weighted + 1.0) / sum);
        }
        c.remove(0);
        c
    }
}

/// The last few accepted states, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeHistory {
    depth: usize,
    entries: VecDeque<(f64, State)>,
}

impl SchemeHistory {
    pub fn new(depth: usize) -> Self {
        Self {
            depth: depth.max(1),
            entries: VecDeque::with_capacity(depth.max(1)),
        }
    }

    pub fn push(&mut self, t: f64, h: State) {
        if self.entries.len() == self.depth {
            self.entries.pop_back();
        }
        self.entries.push_front((t, h));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.depth
    }

    pub fn newest(&self) -> Option<&(f64, State)> {
        self.entries.front()
    }

    pub fn states(&self) -> Vec<State> {
        self.entries.iter().map(|(_, h)| h.clone()).collect()
    }

    pub fn get(&self, i: usize) -> Option<&State> {
        self.entries.get(i).map(|(_, h)| h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarmStart {
    /// `z0 = h_k`
    #[default]
    Previous,
    /// `z0 = 2 h_k - h_{k-1}` once two states are known.
    Extrapolate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    /// An inner solve that does not converge aborts the whole solve.
    #[default]
    Abort,
    /// Accept the last iterate and record the step in `flagged_steps`.
    Permissive,
}

/// How a BDF-p solve produces its first `p - 1` states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BdfStartup {
    /// Two-level Richardson extrapolation of proximal Crank-Nicolson
    /// (one step of `s` and two of `s/2`), local error O(s^5).
    #[default]
    ExtrapolatedCn,
    /// Lower-order proximal BDF steps (BE, BDF2, BDF3). Leaves an O(s^2)
    /// global error that caps BDF3/BDF4 at second order.
    LowerOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxConfig {
    pub inner: InnerConfig,
    pub warm_start: WarmStart,
    pub failure_policy: FailurePolicy,
    pub bdf_startup: BdfStartup,
    /// Record `||a h_{k+1} - A - s f(h_{k+1})||` per step. Costs one
    /// uncounted rhs evaluation per step.
    pub record_residuals: bool,
}

impl Default for ProxConfig {
    fn default() -> Self {
        Self::new(InnerConfig::default())
    }
}

impl ProxConfig {
    pub fn new(inner: InnerConfig) -> Self {
        Self {
            inner,
            warm_start: WarmStart::Previous,
            failure_policy: FailurePolicy::Abort,
            bdf_startup: BdfStartup::ExtrapolatedCn,
            record_residuals: true,
        }
    }
}

/// Result of one outer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: State,
    /// One entry per inner solve (stages, startup sub-steps).
    pub inner: Vec<InnerResult>,
}

impl StepOutcome {
    pub fn converged(&self) -> bool {
        self.inner.iter().all(|r| r.converged)
    }

    pub fn iterations(&self) -> usize {
        self.inner.iter().map(|r| r.iterations).sum()
    }

    /// Index and result of the first inner solve that failed.
    pub fn first_failure(&self) -> Option<(usize, &InnerResult)> {
        self.inner.iter().enumerate().find(|(_, r)| !r.converged)
    }

    fn single(res: InnerResult) -> Self {
        Self {
            state: res.z_star.clone(),
            inner: vec![res],
        }
    }
}

/// `h_{k+1} = argmin ||z - h_k||^2/(2s) + F(z)`, warm-started at `z0`.
pub fn prox_backward_euler_step(
    h_k: &State,
    z0: &State,
    s: f64,
    t_next: f64,
    cfg: &InnerConfig,
    rhs: &mut InstrumentedRhs<'_>,
) -> Result<StepOutcome> {
    let w = ProxWeights::backward_euler(h_k, s, t_next);
    Ok(StepOutcome::single(run_inner(&w, z0, cfg, rhs)?))
}

/// Trapezoidal step. Spends one extra rhs evaluation on `f(h_k, t_k)`.
pub fn prox_crank_nicolson_step(
    h_k: &State,
    z0: &State,
    s: f64,
    t_k: f64,
    cfg: &InnerConfig,
    rhs: &mut InstrumentedRhs<'_>,
) -> Result<StepOutcome> {
    let f_k = rhs.eval_finite(t_k, h_k)?;
    let w = ProxWeights::crank_nicolson(h_k, &f_k, s, t_k + s);
    Ok(StepOutcome::single(run_inner(&w, z0, cfg, rhs)?))
}

/// BDF step from `history = [h_k, h_{k-1}, ...]`.
pub fn prox_bdf_step(
    order: usize,
    history: &[State],
    z0: &State,
    s: f64,
    t_next: f64,
    cfg: &InnerConfig,
    rhs: &mut InstrumentedRhs<'_>,
) -> Result<StepOutcome> {
    let w = ProxWeights::bdf(order, history, s, t_next)?;
    Ok(StepOutcome::single(run_inner(&w, z0, cfg, rhs)?))
}

/// Multi-stage step. Stage `m` evaluates `f` at `t_k + c_m s` with the stage
/// times of [`MultiStageTableau::stage_times`]; each stage is warm-started
/// from the previous stage value. Stops at the first failed stage.
pub fn prox_multistage_step(
    tableau: &MultiStageTableau,
    h_k: &State,
    s: f64,
    t_k: f64,
    cfg: &InnerConfig,
    rhs: &mut InstrumentedRhs<'_>,
) -> Result<StepOutcome> {
    tableau.validate()?;
    let times = tableau.stage_times();
    let mut stages = vec![h_k.clone()];
    let mut inner = Vec::with_capacity(tableau.stages());
    for (row, c) in tableau.gamma.iter().zip(times) {
        let anchors = row.iter().zip(&stages).map(|(&g, z)| (g, z.clone())).collect();
        let w = ProxWeights::new(anchors, t_k + c * s, s);
        let res = run_inner(&w, stages.last().expect("non-empty"), cfg, rhs)?;
        let ok = res.converged;
        stages.push(res.z_star.clone());
        inner.push(res);
        if !ok {
            break;
        }
    }
    Ok(StepOutcome {
        state: stages.pop().expect("non-empty"),
        inner,
    })
}

/// Richardson-extrapolated Crank-Nicolson step, `(4 y_{s/2,s/2} - y_s) / 3`.
pub fn extrapolated_cn_step(
    h_k: &State,
    s: f64,
    t_k: f64,
    cfg: &InnerConfig,
    rhs: &mut InstrumentedRhs<'_>,
) -> Result<StepOutcome> {
    let coarse = prox_crank_nicolson_step(h_k, h_k, s, t_k, cfg, rhs)?;
    let half = 0.5 * s;
    let first = prox_crank_nicolson_step(h_k, h_k, half, t_k, cfg, rhs)?;
    let second = prox_crank_nicolson_step(&first.state, &first.state, half, t_k + half, cfg, rhs)?;
    let state = (&second.state * 4.0 - &coarse.state) / 3.0;
    let inner = [coarse.inner, first.inner, second.inner].concat();
    Ok(StepOutcome { state, inner })
}

/// Weights defining the implicit equation actually solved by a step; used
/// for residual bookkeeping.
fn residual_weights(
    scheme: ProxScheme,
    startup: bool,
    history: &[State],
    f_k: Option<&State>,
    s: f64,
    t_next: f64,
) -> Option<ProxWeights> {
    if startup {
        return None;
    }
    Some(match scheme {
        ProxScheme::BackwardEuler => ProxWeights::backward_euler(&history[0], s, t_next),
        ProxScheme::CrankNicolson => ProxWeights::crank_nicolson(&history[0], f_k?, s, t_next),
        ProxScheme::Bdf2 | ProxScheme::Bdf3 | ProxScheme::Bdf4 => {
            ProxWeights::bdf(scheme.bdf_order()?, history, s, t_next).ok()?
        }
        ProxScheme::Multistage2 | ProxScheme::Multistage3 => return None,
    })
}

fn implicit_residual(problem: &OdeProblem, w: &ProxWeights, z: &State) -> f64 {
    let f = problem.rhs_uncounted(w.eval_time, z);
    let mut r = z * w.weight_sum();
    for (c, y) in &w.anchors {
        r.axpy(-c, y, 1.0);
    }
    r.axpy(-w.step, &f, 1.0);
    if let Some(g0) = &w.shift {
        r.axpy(w.step, g0, 1.0);
    }
    r.norm()
}

/// Integrate `problem` from `h0` over `grid` with a proximal scheme.
///
/// BDF schemes fill their history with [`ProxConfig::bdf_startup`] steps run
/// at a 10x tighter inner tolerance; multistep schemes also fall back to the
/// startup step for a shortened final step, since their coefficients assume
/// uniform spacing.
pub fn solve(
    problem: &OdeProblem,
    scheme: ProxScheme,
    grid: &TimeGrid,
    h0: &State,
    cfg: &ProxConfig,
) -> Result<SolveResult> {
    problem.check_state(h0)?;
    cfg.inner.validate()?;
    let mut rhs = InstrumentedRhs::new(problem);
    let mut out = SolveResult::default();
    out.push(grid.times[0], h0);

    let tableau = match scheme {
        ProxScheme::Multistage2 => Some(MultiStageTableau::order2()),
        ProxScheme::Multistage3 => Some(MultiStageTableau::order3()),
        _ => None,
    };
    let startup_cfg = InnerConfig {
        tol: cfg.inner.tol / 10.0,
        ..cfg.inner
    };
    let mut history = SchemeHistory::new(scheme.history_depth().max(2));
    history.push(grid.times[0], h0.clone());

    for k in 0..grid.steps() {
        let t_k = grid.times[k];
        let t_next = grid.times[k + 1];
        let s = t_next - t_k;
        let states = history.states();
        let h_k = &states[0];
        let z0 = match (cfg.warm_start, states.get(1)) {
            (WarmStart::Extrapolate, Some(prev)) => h_k * 2.0 - prev,
            _ => h_k.clone(),
        };

        let mut f_k = None;
        let mut startup = false;
        let outcome = match scheme {
            ProxScheme::BackwardEuler => prox_backward_euler_step(h_k, &z0, s, t_next, &cfg.inner, &mut rhs)?,
            ProxScheme::CrankNicolson => {
                let step = prox_crank_nicolson_step(h_k, &z0, s, t_k, &cfg.inner, &mut rhs)?;
                if cfg.record_residuals {
                    f_k = Some(problem.rhs_uncounted(t_k, h_k));
                }
                step
            }
            ProxScheme::Bdf2 | ProxScheme::Bdf3 | ProxScheme::Bdf4 => {
                let order = scheme.bdf_order().expect("bdf scheme");
                if states.len() >= order && grid.is_full_step(k) {
                    prox_bdf_step(order, &states, &z0, s, t_next, &cfg.inner, &mut rhs)?
                } else {
                    startup = true;
                    match cfg.bdf_startup {
                        BdfStartup::ExtrapolatedCn => extrapolated_cn_step(h_k, s, t_k, &startup_cfg, &mut rhs)?,
                        BdfStartup::LowerOrder => {
                            let lower = states.len().min(order);
                            if grid.is_full_step(k) {
                                prox_bdf_step(lower, &states, &z0, s, t_next, &startup_cfg, &mut rhs)?
                            } else {
                                prox_backward_euler_step(h_k, &z0, s, t_next, &startup_cfg, &mut rhs)?
                            }
                        }
                    }
                }
            }
            ProxScheme::Multistage2 | ProxScheme::Multistage3 => prox_multistage_step(
                tableau.as_ref().expect("multistage tableau"),
                h_k,
                s,
                t_k,
                &cfg.inner,
                &mut rhs,
            )?,
        };

        if let Some((stage, failed)) = outcome.first_failure() {
            match cfg.failure_policy {
                FailurePolicy::Abort => {
                    return Err(Error::InnerNotConverged {
                        step: k,
                        stage,
                        iterations: failed.iterations,
                        last_increment: failed.last_increment,
                    })
                }
                FailurePolicy::Permissive => {
                    if !outcome.state.iter().all(|v| v.is_finite()) {
                        return Err(Error::Divergence { t: t_next });
                    }
                    out.flagged_steps.push(k);
                }
            }
        }

        if cfg.record_residuals {
            let residual = residual_weights(scheme, startup, &states, f_k.as_ref(), s, t_next)
                .map(|w| implicit_residual(problem, &w, &outcome.state))
                .unwrap_or(f64::NAN);
            out.residuals.push(residual);
        }
        out.inner_iterations.push(outcome.iterations());
        out.push(t_next, &outcome.state);
        history.push(t_next, outcome.state);
    }

    out.accepted_steps = grid.steps();
    out.nfe_total = rhs.nfe();
    if problem.has_potential() {
        let trace = out
            .times
            .iter()
            .zip(&out.states)
            .map(|(&t, h)| problem.potential(t, &State::from_column_slice(h)))
            .collect::<Result<Vec<_>>>()?;
        out.energy_trace = Some(trace);
    }
    Ok(out)
}
