//! Backward Euler through three implicit backends: proximal FR, fixed point
//! and Newton.

use serde::{Deserialize, Serialize};

use super::order::{linear_fit, loglog_slope, LinearFit};
use super::problems::{diffusion_eigenvalues, make_diffusion_benchmark, BenchmarkProblem, DEFAULT_SEED};
use super::report::{Metadata, Report, Row};
use super::sweep::{make_row, timed_solve, SolverSpec};
use crate::error::Result;
use crate::inner::{InnerConfig, InnerMethod};
use crate::problem::State;
use crate::prox::ProxScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub grid_sizes: Vec<usize>,
    pub step: f64,
    pub steps: usize,
    pub tol: f64,
    pub seed: u64,
    pub warmup: bool,
}

impl Default for BackendSpec {
    /// `s = 1e-7` keeps the fixed-point map contractive (`s mu_max ~ 0.1`)
    /// up to `N = 512`.
    fn default() -> Self {
        Self {
            grid_sizes: vec![16, 32, 64, 128, 256, 512],
            step: 1e-7,
            steps: 10,
            tol: 1e-10,
            seed: DEFAULT_SEED,
            warmup: true,
        }
    }
}

/// Largest eigenvalue of the diffusion Hessian `I + s L`.
fn hessian_max(n: usize, step: f64) -> f64 {
    1.0 + step * diffusion_eigenvalues(n).into_iter().fold(0.0, f64::max)
}

/// The three backends at one grid size. The proximal step size is
/// `0.9 / lambda_max(I + s L)`.
pub fn backends_for(n: usize, step: f64, tol: f64) -> [SolverSpec; 3] {
    let cfg = |method, eta| InnerConfig::new(method, eta, tol).with_max_iter(100_000);
    [
        SolverSpec::prox(
            ProxScheme::BackwardEuler,
            cfg(InnerMethod::Fr, 0.9 / hessian_max(n, step)),
        ),
        SolverSpec::prox(ProxScheme::BackwardEuler, cfg(InnerMethod::FixedPoint, 1.0)),
        SolverSpec::prox(ProxScheme::BackwardEuler, cfg(InnerMethod::Newton, 1.0)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendComparison {
    /// Rows are `(backend, N)`; `param` holds N.
    pub report: Report,
    /// Largest pairwise `||h_a(T) - h_b(T)||` per grid size.
    pub disagreement: Vec<(usize, f64)>,
}

impl BackendComparison {
    /// Wall time (ns) per grid size for one backend label.
    pub fn wall_times(&self, label: &str) -> Vec<(usize, u64)> {
        self.report
            .rows
            .iter()
            .filter(|r| r.solver == label)
            .map(|r| (r.param as usize, r.wall_time_ns))
            .collect()
    }
}

fn bench_for(spec: &BackendSpec, n: usize) -> Result<BenchmarkProblem> {
    make_diffusion_benchmark(n, spec.seed)?.with_interval(0.0, spec.step * spec.steps as f64)
}

pub fn compare_implicit_backends(spec: &BackendSpec) -> Result<BackendComparison> {
    let mut rows = Vec::new();
    let mut disagreement = Vec::new();
    for &n in &spec.grid_sizes {
        let bench = bench_for(spec, n)?;
        let mut finals: Vec<State> = Vec::new();
        for solver in backends_for(n, spec.step, spec.tol) {
            let (outcome, ns) = timed_solve(&bench, &solver, spec.step, spec.warmup);
            rows.push(make_row(&bench, &solver, n as f64, &outcome, ns));
            if let Ok(r) = &outcome {
                finals.push(r.final_state().expect("non-empty trajectory"));
            }
        }
        let mut worst = if finals.len() < 3 { f64::INFINITY } else { 0.0 };
        for i in 0..finals.len() {
            for j in i + 1..finals.len() {
                worst = f64::max(worst, (&finals[i] - &finals[j]).norm());
            }
        }
        disagreement.push((n, worst));
    }
    let metadata = Metadata {
        benchmark: "diffusion".into(),
        seed: spec.seed,
        grid_size: spec.grid_sizes.iter().copied().max().unwrap_or(0),
        metric: "wall-time".into(),
        config_hash: {
            use sha2::{Digest, Sha256};
            let json = serde_json::to_vec(spec).expect("spec serializes");
            Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
        },
        artifact_version: env!("CARGO_PKG_VERSION").into(),
    };
    Ok(BackendComparison {
        report: Report { metadata, rows },
        disagreement,
    })
}

/// Log-log slope of wall time against grid size.
pub fn time_growth_exponent(times: &[(usize, u64)]) -> Result<f64> {
    let ns: Vec<f64> = times.iter().map(|(n, _)| *n as f64).collect();
    let ts: Vec<f64> = times.iter().map(|(_, t)| (*t).max(1) as f64).collect();
    loglog_slope(&ns, &ts)
}

/// Proximal BE wall time against NFE on diffusion(N) as the number of
/// steps varies; returns the rows and the least-squares line through
/// `(nfe, wall_time_ns)`. Repetitions are interleaved across the points and
/// each point keeps its fastest run, so slow periods on a shared machine do
/// not land on one end of the fit.
pub fn prox_time_vs_nfe(
    n: usize,
    step: f64,
    step_counts: &[usize],
    tol: f64,
    seed: u64,
    repetitions: usize,
) -> Result<(Vec<Row>, LinearFit)> {
    let solver = backends_for(n, step, tol)[0].clone();
    let benches = step_counts
        .iter()
        .map(|&count| make_diffusion_benchmark(n, seed)?.with_interval(0.0, step * count as f64))
        .collect::<Result<Vec<_>>>()?;
    let mut timed: Vec<_> = benches.iter().map(|b| timed_solve(b, &solver, step, true)).collect();
    for _ in 1..repetitions.max(1) {
        for (bench, (_, best)) in benches.iter().zip(timed.iter_mut()) {
            *best = (*best).min(timed_solve(bench, &solver, step, false).1);
        }
    }
    let rows: Vec<Row> = benches
        .iter()
        .zip(step_counts)
        .zip(&timed)
        .map(|((bench, &count), (outcome, ns))| make_row(bench, &solver, count as f64, outcome, *ns))
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.nfe as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.wall_time_ns as f64).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok((rows, fit))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backends_agree_small() {
        let spec = BackendSpec {
            grid_sizes: vec![16, 32],
            warmup: false,
            ..BackendSpec::default()
        };
        let cmp = compare_implicit_backends(&spec).unwrap();
        assert_eq!(cmp.report.rows.len(), 6);
        assert!(cmp.report.rows.iter().all(|r| r.is_ok()));
        for (_, d) in &cmp.disagreement {
            assert!(*d <= 10.0 * spec.tol, "disagreement {d:e}");
        }
        assert_eq!(cmp.wall_times("prox-be/newton").len(), 2);
    }

    #[test]
    fn growth_exponent_of_cubic() {
        let t: Vec<(usize, u64)> = [16usize, 32, 64].iter().map(|&n| (n, (n * n * n) as u64)).collect();
        assert!((time_growth_exponent(&t).unwrap() - 3.0).abs() < 1e-12);
    }
}
