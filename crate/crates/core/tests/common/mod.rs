//! Dense reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use proxode::{OdeProblem, ProxScheme, State};

/// `exp(M)` by scaling and squaring with a degree-24 Taylor polynomial.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.iter().map(|x| x.abs()).sum::<f64>().max(1e-300);
    let squarings = (norm / 0.25).log2().ceil().max(0.0) as i32;
    let a = m / 2f64.powi(squarings);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=24 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Symmetric positive semidefinite matrix with spectrum in `[lo, hi]`.
pub fn random_spd(d: usize, lo: f64, hi: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let diag = DVector::from_fn(d, |i, _| lo + (hi - lo) * i as f64 / (d.max(2) - 1) as f64);
    &q * DMatrix::from_diagonal(&diag) * q.transpose()
}

pub fn random_state(d: usize, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    State::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `h' = -A h` with potential `h^T A h / 2`.
pub fn linear_problem(a: DMatrix<f64>) -> OdeProblem {
    let d = a.nrows();
    let (a1, a2, a3) = (a.clone(), a.clone(), a);
    OdeProblem::new(d, move |_, h| -(&a1 * h))
        .with_potential(move |_, h| 0.5 * h.dot(&(&a2 * h)))
        .with_jacobian(move |_, _| -a3.clone())
}

fn solve_dense(m: DMatrix<f64>, b: State) -> State {
    m.lu().solve(&b).expect("nonsingular oracle system")
}

/// Backward Euler for `h' = -A h`: `(I + sA) z = h`.
pub fn be_step(a: &DMatrix<f64>, h: &State, s: f64) -> State {
    let d = a.nrows();
    solve_dense(DMatrix::identity(d, d) + a * s, h.clone())
}

/// Trapezoidal rule: `(I + sA/2) z = (I - sA/2) h`.
pub fn cn_step(a: &DMatrix<f64>, h: &State, s: f64) -> State {
    let d = a.nrows();
    let half = a * (0.5 * s);
    solve_dense(DMatrix::identity(d, d) + &half, (DMatrix::identity(d, d) - &half) * h)
}

/// BDF of the given order from the textbook form, history newest first:
/// `sum_j alpha_j h_{n+1-j} = s f(h_{n+1})`.
pub fn bdf_step(a: &DMatrix<f64>, history: &[State], s: f64) -> State {
    let d = a.nrows();
    let (lead, rest): (f64, &[f64]) = match history.len() {
        1 => (1.0, &[-1.0]),
        2 => (1.5, &[-2.0, 0.5]),
        3 => (11.0 / 6.0, &[-3.0, 1.5, -1.0 / 3.0]),
        4 => (25.0 / 12.0, &[-4.0, 3.0, -4.0 / 3.0, 0.25]),
        n => panic!("no BDF of order {n}"),
    };
    let mut rhs = State::zeros(d);
    for (alpha, h) in rest.iter().zip(history) {
        rhs -= h * *alpha;
    }
    solve_dense(DMatrix::identity(d, d) * lead + a * s, rhs)
}

/// Richardson combination of one full and two half trapezoidal steps.
pub fn extrapolated_cn(a: &DMatrix<f64>, h: &State, s: f64) -> State {
    let coarse = cn_step(a, h, s);
    let fine = cn_step(a, &cn_step(a, h, s / 2.0), s / 2.0);
    (fine * 4.0 - coarse) / 3.0
}

/// Stage `m` solves `sum_i gamma_{m,i} (z - z_i) = s f(z)`.
pub fn multistage_step(a: &DMatrix<f64>, gamma: &[Vec<f64>], h: &State, s: f64) -> State {
    let d = a.nrows();
    let mut stages = vec![h.clone()];
    for row in gamma {
        let sum: f64 = row.iter().sum();
        let mut rhs = State::zeros(d);
        for (g, z) in row.iter().zip(&stages) {
            rhs += z * *g;
        }
        stages.push(solve_dense(DMatrix::identity(d, d) * sum + a * s, rhs));
    }
    stages.pop().unwrap()
}

/// Direct solve of step `k` of `scheme` given the computed trajectory so far.
/// BDF schemes take their first `order - 1` steps with extrapolated CN.
pub fn oracle_step(
    a: &DMatrix<f64>,
    scheme: ProxScheme,
    gamma: &[Vec<f64>],
    traj: &[State],
    k: usize,
    s: f64,
) -> State {
    let h = &traj[k];
    let bdf = |order: usize| {
        if k + 1 < order {
            extrapolated_cn(a, h, s)
        } else {
            let history: Vec<State> = (0..order).map(|j| traj[k - j].clone()).collect();
            bdf_step(a, &history, s)
        }
    };
    match scheme {
        ProxScheme::BackwardEuler => be_step(a, h, s),
        ProxScheme::CrankNicolson => cn_step(a, h, s),
        ProxScheme::Bdf2 => bdf(2),
        ProxScheme::Bdf3 => bdf(3),
        ProxScheme::Bdf4 => bdf(4),
        ProxScheme::Multistage2 | ProxScheme::Multistage3 => multistage_step(a, gamma, h, s),
    }
}
