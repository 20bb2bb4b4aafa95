use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tensor::LatentTensor;
use crate::math;
use crate::{Error, Result};

/// Cumulative signal rates `alpha_bar_t` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Any strictly decreasing table with values in `(0, 1]`.
    pub fn new(alpha_bars: Vec<f64>) -> Result<Self> {
        if alpha_bars.is_empty() {
            return Err(Error::Domain("schedule needs at least one step"));
        }
        if alpha_bars.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::Domain("alpha_bar values must lie in (0, 1]"));
        }
        if alpha_bars.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Domain("alpha_bar must be strictly decreasing"));
        }
        Ok(Self { alpha_bars })
    }

    /// `alpha_bar_t = 1 - (t - 1) / T`: linearly spaced from 1 down to `1/T`.
    pub fn linear(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Domain("schedule needs at least one step"));
        }
        let t = steps as f64;
        Self::new((0..steps).map(|i| 1.0 - i as f64 / t).collect())
    }

    pub fn steps(&self) -> usize {
        self.alpha_bars.len()
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// `alpha_bar_t` for `1 <= t <= T`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.steps() {
            return Err(Error::Domain("timestep outside 1..=T"));
        }
        Ok(self.alpha_bars[t - 1])
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(10).expect("non-empty schedule")
    }
}

/// `z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps`.
pub fn diffuse_forward(z0: &LatentTensor, t: usize, eps: &LatentTensor, schedule: &NoiseSchedule) -> Result<LatentTensor> {
    z0.check_shape(eps, "diffusion noise")?;
    let ab = schedule.alpha_bar(t)?;
    let (s, n) = (math::sqrt(ab), math::sqrt(1.0 - ab));
    let mut out = z0.clone();
    for (v, &e) in out.values.iter_mut().zip(&eps.values) {
        *v = s * *v + n * e;
    }
    Ok(out)
}

/// Identity-loss weight, decayed linearly from 1.0 to 0.6 over training.
pub fn lambda_schedule(step: u64, total_steps: u64) -> Result<f64> {
    lambda_between(step, total_steps, 1.0, 0.6)
}

/// Linear interpolation from `start` at step 0 to `end` at `total_steps`.
pub fn lambda_between(step: u64, total_steps: u64, start: f64, end: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::Domain("step beyond total_steps"));
    }
    if step == total_steps {
        return Ok(end);
    }
    let frac = step as f64 / total_steps as f64;
    Ok(start + (end - start) * frac)
}
