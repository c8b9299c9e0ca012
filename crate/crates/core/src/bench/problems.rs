//! Benchmark problems with exact-solution oracles.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{OdeProblem, State};

/// Default seed for the random diffusion initial condition.
pub const DEFAULT_SEED: u64 = 42;

/// Imaginary residue above which the DFT oracle is considered broken.
const IMAG_RESIDUE_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BenchmarkProblem {
    pub name: String,
    pub problem: OdeProblem,
    pub t0: f64,
    pub t_end: f64,
    pub default_init: State,
    pub stiff: bool,
}

/// Initial profile for the diffusion benchmark.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionInit {
    /// i.i.d. standard normal entries from the seeded generator.
    #[default]
    Normal,
    /// `exp(-50 (x - 0.5)^2)` on the grid `x_i = i dx`.
    GaussianBump,
}

impl DiffusionInit {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "normal" | "random" => Ok(DiffusionInit::Normal),
            "gaussian-bump" | "bump" => Ok(DiffusionInit::GaussianBump),
            other => Err(Error::InvalidConfig(format!("unknown initial condition '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DiffusionInit::Normal => "normal",
            DiffusionInit::GaussianBump => "gaussian-bump",
        }
    }
}

/// `h' = 3h - 2 cos t - 4 sin t`, `h(0) = 1`, exact solution `cos t + sin t`.
///
/// The potential `-(3/2) z^2 + (2 cos t + 4 sin t) z` is concave in `z`, so
/// gradient-based inner solvers need `3 s < sum c`.
pub fn make_scalar_benchmark() -> BenchmarkProblem {
    let problem = OdeProblem::new(1, |t, h| h.map(|z| 3.0 * z - 2.0 * t.cos() - 4.0 * t.sin()))
        .with_potential(|t, h| {
            let z = h[0];
            -1.5 * z * z + (2.0 * t.cos() + 4.0 * t.sin()) * z
        })
        .with_jacobian(|_, _| DMatrix::from_element(1, 1, 3.0))
        .with_exact(|t| State::from_element(1, t.cos() + t.sin()));
    BenchmarkProblem {
        name: "scalar".into(),
        problem,
        t0: 0.0,
        t_end: 1.0,
        default_init: State::from_element(1, 1.0),
        stiff: false,
    }
}

/// Linear test equation `h' = lambda h` on `[0, 1]` with `h(0) = 1`.
pub fn make_linear_benchmark(lambda: f64) -> BenchmarkProblem {
    let problem = OdeProblem::new(1, move |_, h| h * lambda)
        .with_potential(move |_, h| -0.5 * lambda * h[0] * h[0])
        .with_jacobian(move |_, _| DMatrix::from_element(1, 1, lambda))
        .with_exact(move |t| State::from_element(1, (lambda * t).exp()))
        .with_params(vec![lambda]);
    BenchmarkProblem {
        name: format!("linear({lambda})"),
        problem,
        t0: 0.0,
        t_end: 1.0,
        default_init: State::from_element(1, 1.0),
        stiff: false,
    }
}

/// Grid spacing `1/(N-1)` of the diffusion benchmark.
pub fn diffusion_dx(n: usize) -> f64 {
    1.0 / (n as f64 - 1.0)
}

/// Eigenvalues `mu_j = (2 - 2 cos(2 pi j / N)) / dx^2` of the scaled cyclic Laplacian.
pub fn diffusion_eigenvalues(n: usize) -> Vec<f64> {
    let inv_dx2 = 1.0 / diffusion_dx(n).powi(2);
    (0..n)
        .map(|j| (2.0 - 2.0 * (2.0 * PI * j as f64 / n as f64).cos()) * inv_dx2)
        .collect()
}

/// Dense scaled cyclic Laplacian `circulant(2, -1, 0, ..., 0, -1) / dx^2`.
pub fn diffusion_laplacian(n: usize) -> DMatrix<f64> {
    let inv_dx2 = 1.0 / diffusion_dx(n).powi(2);
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * inv_dx2
        } else if (i + 1) % n == j || (j + 1) % n == i {
            -inv_dx2
        } else {
            0.0
        }
    })
}

/// `L h` with the three-point cyclic stencil.
pub fn apply_laplacian(h: &State) -> State {
    let n = h.len();
    let inv_dx2 = 1.0 / diffusion_dx(n).powi(2);
    State::from_fn(n, |i, _| (2.0 * h[i] - h[(i + n - 1) % n] - h[(i + 1) % n]) * inv_dx2)
}

pub fn diffusion_init(n: usize, seed: u64, init: DiffusionInit) -> State {
    match init {
        DiffusionInit::Normal => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            State::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
        }
        DiffusionInit::GaussianBump => {
            let dx = diffusion_dx(n);
            State::from_fn(n, |i, _| (-50.0 * (i as f64 * dx - 0.5).powi(2)).exp())
        }
    }
}

/// Spectral solution of `h' = -L h` from `h0` at time `t`.
///
/// Panics if the inverse transform leaves an imaginary residue above `1e-10`,
/// which would indicate a broken transform rather than bad input.
pub fn exact_diffusion_solution(h0: &State, t: f64) -> State {
    let n = h0.len();
    if t == 0.0 {
        return h0.clone();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = h0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (c, mu) in buf.iter_mut().zip(diffusion_eigenvalues(n)) {
        *c *= (-mu * t).exp();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let residue = buf.iter().map(|c| (c.im * scale).abs()).fold(0.0, f64::max);
    assert!(
        residue <= IMAG_RESIDUE_LIMIT,
        "imaginary residue {residue:e} in diffusion oracle"
    );
    State::from_iterator(n, buf.iter().map(|c| c.re * scale))
}

/// `h' = -L h` on `N` points with an explicit initial state.
pub fn make_diffusion_from_init(h0: State) -> Result<BenchmarkProblem> {
    let n = h0.len();
    if n < 3 {
        return Err(Error::InvalidConfig(format!("diffusion grid needs N >= 3, got {n}")));
    }
    let oracle_init = h0.clone();
    let problem = OdeProblem::new(n, |_, h| -apply_laplacian(h))
        .with_potential(|_, h| 0.5 * h.dot(&apply_laplacian(h)))
        .with_jacobian(move |_, _| -diffusion_laplacian(n))
        .with_exact(move |t| exact_diffusion_solution(&oracle_init, t))
        .with_params(vec![n as f64]);
    Ok(BenchmarkProblem {
        name: format!("diffusion(N={n})"),
        problem,
        t0: 0.0,
        t_end: 1.0,
        default_init: h0,
        stiff: true,
    })
}

pub fn make_diffusion_benchmark(n: usize, seed: u64) -> Result<BenchmarkProblem> {
    make_diffusion_benchmark_with(n, seed, DiffusionInit::Normal)
}

pub fn make_diffusion_benchmark_with(n: usize, seed: u64, init: DiffusionInit) -> Result<BenchmarkProblem> {
    if n < 3 {
        return Err(Error::InvalidConfig(format!("diffusion grid needs N >= 3, got {n}")));
    }
    make_diffusion_from_init(diffusion_init(n, seed, init))
}

impl BenchmarkProblem {
    /// Replace the time interval, keeping the oracle.
    pub fn with_interval(mut self, t0: f64, t_end: f64) -> Result<Self> {
        if !(t_end > t0) {
            return Err(Error::InvalidConfig(format!("end time {t_end} must exceed {t0}")));
        }
        if t0 != self.t0 {
            self.default_init = self.problem.exact(t0)?;
        }
        self.t0 = t0;
        self.t_end = t_end;
        Ok(self)
    }
}
