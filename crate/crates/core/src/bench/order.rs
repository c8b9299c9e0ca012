//! Convergence-order estimation by step refinement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Errors below this are dominated by round-off; an order fit through them
/// is flagged as unreliable.
pub const ERROR_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub order: f64,
    pub step_sizes: Vec<f64>,
    pub errors: Vec<f64>,
    pub unreliable: bool,
}

/// Least-squares line `y = slope x + intercept` and its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidConfig(
            "linear fit needs at least two paired samples".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("linear fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidConfig("log-log fit needs positive samples".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    Ok(linear_fit(&lx, &ly)?.slope)
}

/// `count` step sizes `s0, s0 r, s0 r^2, ...`.
pub fn geometric_steps(s0: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| s0 * ratio.powi(i as i32)).collect()
}

/// Fit the order from final errors over geometrically spaced steps.
///
/// `final_error` runs the solver at one step size. Steps must number at
/// least three and form a geometric progression. Errors at or below the
/// floor make the estimate unreliable; they are clamped to the floor so the
/// fit stays finite.
pub fn estimate_convergence_order<F>(step_sizes: &[f64], mut final_error: F) -> Result<OrderEstimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    if step_sizes.len() < 3 {
        return Err(Error::InvalidConfig(
            "order estimation needs at least 3 step sizes".into(),
        ));
    }
    if step_sizes.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidConfig("step sizes must be positive".into()));
    }
    let ratio = step_sizes[1] / step_sizes[0];
    let geometric = step_sizes
        .windows(2)
        .all(|w| ((w[1] / w[0]) / ratio - 1.0).abs() < 1e-6);
    if !geometric || ratio == 1.0 {
        return Err(Error::InvalidConfig(
            "step sizes must form a geometric progression".into(),
        ));
    }
    let errors = step_sizes.iter().map(|&s| final_error(s)).collect::<Result<Vec<_>>>()?;
    let unreliable = errors.iter().any(|e| !(*e > ERROR_FLOOR));
    let clamped: Vec<f64> = errors
        .iter()
        .map(|e| if e.is_finite() { e.max(ERROR_FLOOR) } else { f64::MAX })
        .collect();
    let order = loglog_slope(step_sizes, &clamped)?;
    Ok(OrderEstimate {
        order,
        step_sizes: step_sizes.to_vec(),
        errors,
        unreliable,
    })
}
