//! Linear stability domains, stiffness ratio and energy/Lyapunov monitors.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{OdeProblem, SolveResult, State};

/// Stiffness ratios above this are reported as stiff.
pub const STIFF_THRESHOLD: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityMethod {
    ForwardEuler,
    BackwardEuler,
    CrankNicolson,
    Dopri5,
}

impl StabilityMethod {
    pub const ALL: [StabilityMethod; 4] = [
        StabilityMethod::ForwardEuler,
        StabilityMethod::BackwardEuler,
        StabilityMethod::CrankNicolson,
        StabilityMethod::Dopri5,
    ];

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "fe" | "forward-euler" => StabilityMethod::ForwardEuler,
            "be" | "backward-euler" => StabilityMethod::BackwardEuler,
            "cn" | "crank-nicolson" => StabilityMethod::CrankNicolson,
            "dopri5" => StabilityMethod::Dopri5,
            other => return Err(Error::InvalidConfig(format!("unknown stability method '{other}'"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            StabilityMethod::ForwardEuler => "fe",
            StabilityMethod::BackwardEuler => "be",
            StabilityMethod::CrankNicolson => "cn",
            StabilityMethod::Dopri5 => "dopri5",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub method: StabilityMethod,
    pub z: Complex64,
    pub inside: bool,
    /// The moduli compared against 1 (two for DOPRI5).
    pub magnitudes: Vec<f64>,
    /// `z` sits on a pole of the amplification factor.
    pub pole: bool,
}

/// `sum_{r<=5} z^r/r! + z^6/600`
pub fn dopri5_f1(z: Complex64) -> Complex64 {
    taylor(z, 5) + z.powu(6) / 600.0
}

/// `sum_{r<=4} z^r/r! + 1097 z^5/120000 + 161 z^6/120000 + z^7/24000`
pub fn dopri5_f2(z: Complex64) -> Complex64 {
    taylor(z, 4) + z.powu(5) * (1097.0 / 120000.0) + z.powu(6) * (161.0 / 120000.0) + z.powu(7) / 24000.0
}

fn taylor(z: Complex64, degree: u32) -> Complex64 {
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for r in 1..=degree {
        term = term * z / r as f64;
        sum += term;
    }
    sum
}

/// Membership test with strict inequalities; boundary points are outside.
pub fn in_stability_domain(method: StabilityMethod, z: Complex64) -> StabilityVerdict {
    let one = Complex64::new(1.0, 0.0);
    let (inside, magnitudes, pole) = match method {
        StabilityMethod::ForwardEuler => {
            let m = (one + z).norm();
            (m < 1.0, vec![m], false)
        }
        StabilityMethod::BackwardEuler => {
            let m = (one - z).norm();
            (m > 1.0, vec![m], false)
        }
        StabilityMethod::CrankNicolson => {
            let den = one - z / 2.0;
            if den.norm() == 0.0 {
                (false, vec![f64::INFINITY], true)
            } else {
                let m = ((one + z / 2.0) / den).norm();
                (m < 1.0, vec![m], false)
            }
        }
        StabilityMethod::Dopri5 => {
            let m1 = dopri5_f1(z).norm();
            let m2 = dopri5_f2(z).norm();
            (m1 < 1.0 && m2 < 1.0, vec![m1, m2], false)
        }
    };
    StabilityVerdict {
        method,
        z,
        inside,
        magnitudes,
        pole,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffnessReport {
    /// `max |Re| / min |Re|`, `+inf` when a zero mode is present.
    pub ratio: f64,
    /// At least one eigenvalue has zero real part.
    pub zero_mode: bool,
    pub stiff: bool,
}

/// Stiffness ratio of a spectrum given by its real parts.
///
/// Real parts must be non-positive; a zero real part is accepted and yields
/// an infinite ratio with `zero_mode` set.
pub fn stiffness_ratio(real_parts: &[f64]) -> Result<StiffnessReport> {
    if real_parts.is_empty() {
        return Err(Error::InvalidConfig("empty spectrum".into()));
    }
    if let Some(bad) = real_parts.iter().find(|r| !(**r <= 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "eigenvalue real parts must be non-positive, got {bad}"
        )));
    }
    let max = real_parts.iter().map(|r| r.abs()).fold(0.0, f64::max);
    let min = real_parts.iter().map(|r| r.abs()).fold(f64::INFINITY, f64::min);
    let zero_mode = min == 0.0;
    let ratio = if zero_mode { f64::INFINITY } else { max / min };
    Ok(StiffnessReport {
        ratio,
        zero_mode,
        stiff: ratio > STIFF_THRESHOLD,
    })
}

/// Sampled domain membership over a rectangle, rows ordered by imaginary
/// then real part.
pub fn stability_raster(
    method: StabilityMethod,
    re_range: (f64, f64),
    im_range: (f64, f64),
    resolution: usize,
) -> Result<Vec<(f64, f64, bool)>> {
    if resolution < 2 {
        return Err(Error::InvalidConfig("resolution must be at least 2".into()));
    }
    let lin = |(a, b): (f64, f64), i: usize| a + (b - a) * i as f64 / (resolution - 1) as f64;
    let mut out = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        let im = lin(im_range, j);
        for i in 0..resolution {
            let re = lin(re_range, i);
            out.push((re, im, in_stability_domain(method, Complex64::new(re, im)).inside));
        }
    }
    Ok(out)
}

pub fn write_raster_csv(raster: &[(f64, f64, bool)], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "re,im,inside")?;
    for (re, im, inside) in raster {
        writeln!(out, "{re},{im},{}", u8::from(*inside))?;
    }
    Ok(())
}

pub fn write_raster_file(raster: &[(f64, f64, bool)], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_raster_csv(raster, std::io::BufWriter::new(file)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-step view of a monotone functional along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub values: Vec<f64>,
    /// `values[k+1] - values[k]`
    pub deltas: Vec<f64>,
    /// Step indices `k` where the increase exceeded the slack.
    pub violations: Vec<usize>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Slack granted to step `k -> k+1`: `10 eps ||f(h_{k+1})||`.
pub fn inner_slack(problem: &OdeProblem, t: f64, h_next: &State, inner_tol: f64) -> f64 {
    10.0 * inner_tol * problem.rhs_uncounted(t, h_next).norm()
}

/// Check `F(h_{k+1}) <= F(h_k) + slack` along a trajectory.
pub fn energy_monitor(problem: &OdeProblem, trajectory: &SolveResult, inner_tol: f64) -> Result<MonotonicityReport> {
    if !problem.has_potential() {
        return Err(Error::MissingPotential);
    }
    let states: Vec<State> = trajectory.states.iter().map(|s| State::from_column_slice(s)).collect();
    let values = trajectory
        .times
        .iter()
        .zip(&states)
        .map(|(&t, h)| problem.potential(t, h))
        .collect::<Result<Vec<_>>>()?;
    let mut deltas = Vec::with_capacity(values.len().saturating_sub(1));
    let mut violations = Vec::new();
    for k in 0..values.len().saturating_sub(1) {
        let delta = values[k + 1] - values[k];
        deltas.push(delta);
        if delta > inner_slack(problem, trajectory.times[k + 1], &states[k + 1], inner_tol) {
            violations.push(k);
        }
    }
    Ok(MonotonicityReport {
        values,
        deltas,
        violations,
    })
}

/// `F(h_next) + ||h_next - h_k||^2 / (4 s)`
pub fn bdf2_lyapunov(problem: &OdeProblem, t_next: f64, h_next: &State, h_k: &State, s: f64) -> Result<f64> {
    Ok(problem.potential(t_next, h_next)? + (h_next - h_k).norm_squared() / (4.0 * s))
}

/// `F(h_next) + <h_next - h_k, grad F(h_k)>` with `grad F(h_k) = -f(h_k)`.
pub fn cn_lyapunov(problem: &OdeProblem, t_next: f64, h_next: &State, h_k: &State, f_k: &State) -> Result<f64> {
    Ok(problem.potential(t_next, h_next)? - (h_next - h_k).dot(f_k))
}

/// The BDF2 functional is nonincreasing from the first step where both
/// arguments come from accepted states (`k >= 1`).
pub fn bdf2_lyapunov_monitor(
    problem: &OdeProblem,
    trajectory: &SolveResult,
    inner_tol: f64,
) -> Result<MonotonicityReport> {
    let states: Vec<State> = trajectory.states.iter().map(|s| State::from_column_slice(s)).collect();
    let times = &trajectory.times;
    let mut values = Vec::new();
    for k in 1..states.len() {
        let s = times[k] - times[k - 1];
        values.push(bdf2_lyapunov(problem, times[k], &states[k], &states[k - 1], s)?);
    }
    let mut deltas = Vec::new();
    let mut violations = Vec::new();
    for j in 0..values.len().saturating_sub(1) {
        let delta = values[j + 1] - values[j];
        deltas.push(delta);
        // values[j+1] belongs to the step landing on states[j + 2]
        if delta > inner_slack(problem, times[j + 2], &states[j + 2], inner_tol) {
            violations.push(j + 1);
        }
    }
    Ok(MonotonicityReport {
        values,
        deltas,
        violations,
    })
}

/// Check `F(h_{k+1}) + <h_{k+1} - h_k, grad F(h_k)> <= F(h_k) + slack` for every step.
pub fn cn_lyapunov_monitor(
    problem: &OdeProblem,
    trajectory: &SolveResult,
    inner_tol: f64,
) -> Result<MonotonicityReport> {
    let states: Vec<State> = trajectory.states.iter().map(|s| State::from_column_slice(s)).collect();
    let times = &trajectory.times;
    let mut values = Vec::new();
    let mut deltas = Vec::new();
    let mut violations = Vec::new();
    for k in 0..states.len().saturating_sub(1) {
        let f_k = problem.rhs_uncounted(times[k], &states[k]);
        let lhs = cn_lyapunov(problem, times[k + 1], &states[k + 1], &states[k], &f_k)?;
        let rhs = problem.potential(times[k], &states[k])?;
        values.push(lhs);
        deltas.push(lhs - rhs);
        if lhs - rhs > inner_slack(problem, times[k + 1], &states[k + 1], inner_tol) {
            violations.push(k);
        }
    }
    Ok(MonotonicityReport {
        values,
        deltas,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn table_rows() {
        assert!(in_stability_domain(StabilityMethod::ForwardEuler, real(-1.0)).inside);
        let be = in_stability_domain(StabilityMethod::BackwardEuler, real(-100.0));
        assert!(be.inside);
        assert_eq!(be.magnitudes[0], 101.0);
        let dp = in_stability_domain(StabilityMethod::Dopri5, real(-1.0));
        assert!(dp.inside);
        assert!((dp.magnitudes[0] - 0.368333).abs() < 1e-6);
        assert!((dp.magnitudes[1] - 0.367158).abs() < 1e-6);
    }

    #[test]
    fn crank_nicolson_pole() {
        let v = in_stability_domain(StabilityMethod::CrankNicolson, real(2.0));
        assert!(v.pole && !v.inside);
    }

    #[test]
    fn forward_euler_boundary_flips() {
        let fe = |x| in_stability_domain(StabilityMethod::ForwardEuler, real(x)).inside;
        assert!(!fe(-2.0) && !fe(0.0));
        assert!(fe(-2.0 + 1e-9) && fe(-1e-9));
        assert!(!fe(-2.0 - 1e-9) && !fe(1e-9));
    }

    #[test]
    fn stiffness_examples() {
        assert_eq!(stiffness_ratio(&[-1.0, -1000.0]).unwrap().ratio, 1000.0);
        let same = stiffness_ratio(&[-3.5, -3.5]).unwrap();
        assert_eq!(same.ratio, 1.0);
        assert!(!same.stiff);
        let zero = stiffness_ratio(&[0.0, -4.0]).unwrap();
        assert!(zero.zero_mode && zero.ratio.is_infinite() && zero.stiff);
        assert!(stiffness_ratio(&[1.0, -1.0]).is_err());
        assert!(stiffness_ratio(&[]).is_err());
    }

    #[test]
    fn raster_layout() {
        let r = stability_raster(StabilityMethod::ForwardEuler, (-2.0, 0.0), (-1.0, 1.0), 3).unwrap();
        assert_eq!(r.len(), 9);
        assert_eq!(r[4], (-1.0, 0.0, true));
        let mut buf = Vec::new();
        write_raster_csv(&r[..1], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "re,im,inside\n-2,-1,0\n");
    }

    fn half_square() -> OdeProblem {
        OdeProblem::new(1, |_, h| -h).with_potential(|_, h| 0.5 * h.norm_squared())
    }

    fn trajectory(values: &[f64], dt: f64) -> SolveResult {
        let mut r = SolveResult::default();
        for (k, v) in values.iter().enumerate() {
            r.push(k as f64 * dt, &State::from_element(1, *v));
        }
        r
    }

    #[test]
    fn constant_trajectory_has_zero_deltas() {
        let p = half_square();
        let rep = energy_monitor(&p, &trajectory(&[2.0; 5], 0.1), 0.0).unwrap();
        assert!(rep.deltas.iter().all(|d| *d == 0.0));
        assert!(rep.passed());
        let bdf = bdf2_lyapunov_monitor(&p, &trajectory(&[2.0; 5], 0.1), 0.0).unwrap();
        assert!(bdf.values.iter().all(|v| *v == 2.0));
    }

    #[test]
    fn growing_trajectory_violates() {
        let p = half_square();
        let rep = energy_monitor(&p, &trajectory(&[1.0, 0.5, 2.0], 0.1), 1e-8).unwrap();
        assert_eq!(rep.violations, vec![1]);
    }

    #[test]
    fn lyapunov_formulas() {
        let p = half_square();
        let h = State::from_element(1, 0.7);
        assert!((bdf2_lyapunov(&p, 0.0, &h, &h, 0.1).unwrap() - 0.245).abs() < 1e-15);
        let big = bdf2_lyapunov(&p, 0.0, &h, &State::from_element(1, 0.2), 1e12).unwrap();
        assert!((big - 0.245).abs() < 1e-12);
        let f = p.rhs_uncounted(0.0, &h);
        assert!((cn_lyapunov(&p, 0.0, &h, &h, &f).unwrap() - 0.245).abs() < 1e-15);
    }

    #[test]
    fn cn_inequality_scalar_quadratic() {
        // F = z^2/2: (z+ - z)(z+ + z)/2 + (z+ - z) z <= 0 for decaying iterates
        let p = half_square();
        let (z, zp) = (1.0f64, 0.6f64);
        let f = p.rhs_uncounted(0.0, &State::from_element(1, z));
        let lhs = cn_lyapunov(&p, 0.0, &State::from_element(1, zp), &State::from_element(1, z), &f).unwrap();
        let expected = 0.5 * z * z + (zp - z) * (zp + z) / 2.0 + (zp - z) * z;
        assert!((lhs - expected).abs() < 1e-15);
        assert!(lhs <= 0.5 * z * z);
    }
}
