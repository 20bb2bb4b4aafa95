use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::batch::HarnessBatch;
use super::loss::{loss_and_gradients, loss_total};
use super::model::{HarnessState, ParamId};
use crate::{Error, Result};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Magnitudes below this are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: String,
    pub count: usize,
    pub max_relative_error: f64,
    pub max_abs_gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub eps_fd: f64,
    pub lambda_id: f64,
    pub max_relative_error: f64,
    pub parameters: usize,
    pub groups: Vec<GroupError>,
}

/// Central finite differences of the total loss for every parameter group.
pub fn numeric_gradients(state: &HarnessState, batch: &HarnessBatch, lambda_id: f64, eps_fd: f64) -> Result<Vec<Vec<f64>>> {
    if !(eps_fd > 0.0 && eps_fd.is_finite()) {
        return Err(Error::Domain("finite-difference step must be positive"));
    }
    let mut probe = state.clone();
    let ids: Vec<ParamId> = state.param_ids();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let n = probe.param(id).len();
        let mut g = Vec::with_capacity(n);
        for k in 0..n {
            let orig = probe.param(id)[k];
            probe.param_mut(id)[k] = orig + eps_fd;
            let up = loss_total(batch, &probe, lambda_id)?.total;
            probe.param_mut(id)[k] = orig - eps_fd;
            let down = loss_total(batch, &probe, lambda_id)?.total;
            probe.param_mut(id)[k] = orig;
            g.push((up - down) / (2.0 * eps_fd));
        }
        out.push(g);
    }
    Ok(out)
}

/// Compares analytic gradients of the total loss against central differences.
pub fn grad_check(state: &HarnessState, batch: &HarnessBatch, lambda_id: f64, eps_fd: f64) -> Result<GradCheck> {
    let (_, grads) = loss_and_gradients(batch, state, lambda_id)?;
    let analytic = grads.total();
    let numeric = numeric_gradients(state, batch, lambda_id, eps_fd)?;
    let mut groups = Vec::with_capacity(grads.ids.len());
    let mut worst = 0.0f64;
    let mut parameters = 0;
    for ((id, a), n) in grads.ids.iter().zip(&analytic).zip(&numeric) {
        let err = a
            .iter()
            .zip(n)
            .map(|(&a, &n)| relative_error(a, n))
            .fold(0.0f64, f64::max);
        worst = worst.max(err);
        parameters += a.len();
        groups.push(GroupError {
            group: id.name(),
            count: a.len(),
            max_relative_error: err,
            max_abs_gradient: a.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        });
    }
    Ok(GradCheck {
        eps_fd,
        lambda_id,
        max_relative_error: worst,
        parameters,
        groups,
    })
}
