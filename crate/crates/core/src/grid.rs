use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack under which `(T - t0) / s` counts as a whole number of steps.
const WHOLE_STEP_SLACK: f64 = 1e-9;

/// Uniform time grid from `t0` to `t_end`. Interior gaps equal `step`; the
/// last gap is shrunk so the grid ends on `t_end` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub step: f64,
    pub times: Vec<f64>,
}

impl TimeGrid {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Width of the k-th step, `times[k+1] - times[k]`.
    pub fn gap(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// Whether step `k` has the nominal width (the last step may be shorter).
    pub fn is_full_step(&self, k: usize) -> bool {
        (self.gap(k) - self.step).abs() <= 1e-9 * self.step
    }
}

pub fn make_uniform_grid(t0: f64, t_end: f64, step: f64) -> Result<TimeGrid> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidConfig(format!("step size must be positive, got {step}")));
    }
    if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "end time {t_end} must exceed start time {t0}"
        )));
    }
    let ratio = (t_end - t0) / step;
    let nearest = ratio.round();
    let whole = (ratio - nearest).abs() <= WHOLE_STEP_SLACK * nearest.max(1.0) && nearest >= 1.0;
    let full_steps = if whole {
        nearest as usize - 1
    } else {
        ratio.floor() as usize
    };
    let mut times: Vec<f64> = (0..=full_steps).map(|i| t0 + i as f64 * step).collect();
    times.push(t_end);
    Ok(TimeGrid { t0, t_end, step, times })
}
