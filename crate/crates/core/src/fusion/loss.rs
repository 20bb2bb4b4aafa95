use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::batch::HarnessBatch;
use super::model::{HarnessState, ParamId};
use super::tensor::LatentTensor;
use crate::field::FieldMap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub denoise: f64,
    pub identity: f64,
    pub lambda_id: f64,
}

/// `sum (eps - pred)^2 / N` over every element.
pub fn denoise_loss(pred: &LatentTensor, eps: &LatentTensor) -> Result<f64> {
    pred.check_shape(eps, "denoise loss")?;
    let s: f64 = pred
        .values
        .iter()
        .zip(&eps.values)
        .map(|(p, e)| (e - p) * (e - p))
        .sum();
    Ok(s / eps.values.len() as f64)
}

fn check_mask(m1: &FieldMap, eps: &LatentTensor) -> Result<()> {
    if m1.width != eps.width || m1.height != eps.height {
        return Err(Error::Shape(alloc::format!(
            "mask is {}x{}, prediction is {}x{}",
            m1.width,
            m1.height,
            eps.width,
            eps.height
        )));
    }
    Ok(())
}

/// `|| M1 * (eps - fg_pred) ||^2 / N`, the mask broadcast over channels and
/// `N` counting every element, masked or not.
pub fn identity_loss(fg_pred: &LatentTensor, eps: &LatentTensor, m1: &FieldMap) -> Result<f64> {
    fg_pred.check_shape(eps, "identity loss")?;
    check_mask(m1, eps)?;
    let plane = eps.height * eps.width;
    let mut s = 0.0;
    for ch in 0..eps.channels {
        for (i, &m) in m1.values.iter().enumerate() {
            let k = ch * plane + i;
            let r = m * (eps.values[k] - fg_pred.values[k]);
            s += r * r;
        }
    }
    Ok(s / eps.values.len() as f64)
}

/// Intermediate tensors of one forward pass, kept for backprop.
pub(crate) struct Trace {
    pub fg_pooled: Vec<LatentTensor>,
    pub bg_pooled: Vec<LatentTensor>,
    pub fg: Vec<LatentTensor>,
    pub gated: Vec<LatentTensor>,
    pub fused: Vec<LatentTensor>,
    pub pred: LatentTensor,
    pub fg_pred: LatentTensor,
    pub tau: f64,
}

pub(crate) fn forward(state: &HarnessState, batch: &HarnessBatch) -> Result<Trace> {
    state.check_input(&batch.x0, state.bg_channels())?;
    state.check_input(&batch.x1, state.fg_channels())?;
    let tau = state.time_fraction(batch.t)?;
    let (fg, fg_pooled) = state.branch(&batch.x1, batch.t, true)?;
    let (bg, bg_pooled) = state.branch(&batch.x0, batch.t, false)?;
    let gated: Vec<LatentTensor> = state.levels.iter().zip(&fg).map(|(l, f)| l.gate.apply(f)).collect();
    let fused: Vec<LatentTensor> = bg
        .into_iter()
        .zip(&gated)
        .map(|(mut b, g)| {
            for (v, z) in b.values.iter_mut().zip(&g.values) {
                *v += state.omega * z;
            }
            b
        })
        .collect();
    let half = batch.x0.layout.half_width;
    let pred = state.decode(&fused, |l| &l.decoder, half);
    let fg_pred = state.decode(&fg, |l| &l.fg_head, half);
    Ok(Trace {
        fg_pooled,
        bg_pooled,
        fg,
        gated,
        fused,
        pred,
        fg_pred,
        tau,
    })
}

fn breakdown(trace: &Trace, batch: &HarnessBatch, lambda_id: f64) -> Result<LossBreakdown> {
    let denoise = denoise_loss(&trace.pred, &batch.eps)?;
    let identity = identity_loss(&trace.fg_pred, &batch.eps, &batch.m1)?;
    let total = denoise + lambda_id * identity;
    if !total.is_finite() {
        return Err(Error::Validation("loss is not finite".into()));
    }
    Ok(LossBreakdown {
        total,
        denoise,
        identity,
        lambda_id,
    })
}

/// Denoising, identity and weighted total losses for one batch.
pub fn loss_total(batch: &HarnessBatch, state: &HarnessState, lambda_id: f64) -> Result<LossBreakdown> {
    batch.validate()?;
    breakdown(&forward(state, batch)?, batch, lambda_id)
}

/// Analytic gradients per parameter group, split by loss term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub ids: Vec<ParamId>,
    /// Gradient of the denoising loss.
    pub denoise: Vec<Vec<f64>>,
    /// Gradient of the unweighted identity loss.
    pub identity: Vec<Vec<f64>>,
    pub lambda_id: f64,
}

impl Gradients {
    /// `denoise + lambda_id * identity`, grouped like `ids`.
    pub fn total(&self) -> Vec<Vec<f64>> {
        self.denoise
            .iter()
            .zip(&self.identity)
            .map(|(d, i)| d.iter().zip(i).map(|(d, i)| d + self.lambda_id * i).collect())
            .collect()
    }

    /// The weighted identity component `lambda_id * d identity`.
    pub fn identity_component(&self) -> Vec<Vec<f64>> {
        self.identity
            .iter()
            .map(|g| g.iter().map(|v| self.lambda_id * v).collect())
            .collect()
    }

    pub fn position(&self, id: ParamId) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }
}

/// Output gradient `2 w (pred - eps) / N`, optionally mask-weighted, padded
/// with zeros over the condition half.
fn output_grad(pred: &LatentTensor, eps: &LatentTensor, mask: Option<&FieldMap>) -> Result<LatentTensor> {
    let n = eps.values.len() as f64;
    let plane = eps.height * eps.width;
    let mut g = pred.clone();
    for (k, v) in g.values.iter_mut().enumerate() {
        let m = mask.map_or(1.0, |m| m.values[k % plane]);
        *v = 2.0 * m * m * (*v - eps.values[k]) / n;
    }
    LatentTensor::concat_width(&LatentTensor::zeros(g.channels, g.height, g.width), &g)
}

/// Backprop of a loss whose gradients wrt the fused and foreground-head
/// predictions are `g_pred` and `g_fg` (full width, zero on the condition half).
fn backward(state: &HarnessState, trace: &Trace, g_pred: Option<&LatentTensor>, g_fg: Option<&LatentTensor>) -> Vec<Vec<f64>> {
    let mut grad = state.clone();
    let ids = state.param_ids();
    for &id in &ids {
        grad.param_mut(id).fill(0.0);
    }
    let mut d_omega = 0.0;
    for (i, l) in state.levels.iter().enumerate() {
        let k = l.factor;
        let hidden = l.gate.in_channels;
        let fg = &trace.fg[i];
        let mut g_f = LatentTensor::zeros(hidden, fg.height, fg.width);
        if let Some(gp) = g_pred {
            let gl = &mut grad.levels[i];
            l.decoder.accumulate_grads(gp, &trace.fused[i].upsample(k), &mut gl.decoder.weight, None);
            let g_e = l.decoder.apply_transpose(gp).block_sum(k);
            l.bg.accumulate_grads(&g_e, &trace.bg_pooled[i], &mut gl.bg.weight, None);
            d_omega += g_e.values.iter().zip(&trace.gated[i].values).map(|(a, b)| a * b).sum::<f64>();
            let g_z = g_e.scaled(state.omega);
            l.gate.accumulate_grads(&g_z, fg, &mut gl.gate.weight, Some(&mut gl.gate.bias));
            g_f.add_assign(&l.gate.apply_transpose(&g_z));
        }
        if let Some(gf) = g_fg {
            let gl = &mut grad.levels[i];
            l.fg_head.accumulate_grads(gf, &fg.upsample(k), &mut gl.fg_head.weight, None);
            g_f.add_assign(&l.fg_head.apply_transpose(gf).block_sum(k));
        }
        let gl = &mut grad.levels[i];
        l.fg.accumulate_grads(&g_f, &trace.fg_pooled[i], &mut gl.fg.weight, Some(&mut gl.fg.bias));
        let plane = g_f.height * g_f.width;
        for (ch, e) in gl.fg_time.iter_mut().enumerate() {
            *e += trace.tau * g_f.values[ch * plane..(ch + 1) * plane].iter().sum::<f64>();
        }
    }
    grad.omega = d_omega;
    ids.iter().map(|&id| grad.param(id).to_vec()).collect()
}

/// Loss breakdown and analytic gradients in one forward/backward pass.
pub fn loss_and_gradients(batch: &HarnessBatch, state: &HarnessState, lambda_id: f64) -> Result<(LossBreakdown, Gradients)> {
    batch.validate()?;
    let trace = forward(state, batch)?;
    let loss = breakdown(&trace, batch, lambda_id)?;
    let g_pred = output_grad(&trace.pred, &batch.eps, None)?;
    let g_fg = output_grad(&trace.fg_pred, &batch.eps, Some(&batch.m1))?;
    let grads = Gradients {
        ids: state.param_ids(),
        denoise: backward(state, &trace, Some(&g_pred), None),
        identity: backward(state, &trace, None, Some(&g_fg)),
        lambda_id,
    };
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldKind;
    use crate::fusion::batch::BatchParts;
    use crate::fusion::model::HarnessConfig;

    fn setup() -> (HarnessState, HarnessBatch) {
        let state = HarnessState::new(HarnessConfig::default()).unwrap();
        let batch = BatchParts::synthetic(8, 4, 8, 10, 3)
            .unwrap()
            .assemble(&state.schedule)
            .unwrap();
        (state, batch)
    }

    #[test]
    fn perfect_predictions_have_zero_loss() {
        let eps = LatentTensor::gaussian(2, 4, 4, 1);
        let m = FieldMap::filled(4, 4, FieldKind::Mask, 1.0);
        assert_eq!(denoise_loss(&eps, &eps).unwrap(), 0.0);
        assert_eq!(identity_loss(&eps, &eps, &m).unwrap(), 0.0);
    }

    #[test]
    fn constant_residual_masked_fraction() {
        let eps = LatentTensor::filled(3, 4, 4, 0.5);
        let pred = LatentTensor::zeros(3, 4, 4);
        let mut m = FieldMap::filled(4, 4, FieldKind::Mask, 0.0);
        for v in m.values.iter_mut().take(4) {
            *v = 1.0;
        }
        let got = identity_loss(&pred, &eps, &m).unwrap();
        assert!((got - 0.25 * 0.25).abs() < 1e-15);
        let empty = FieldMap::filled(4, 4, FieldKind::Mask, 0.0);
        assert_eq!(identity_loss(&pred, &eps, &empty).unwrap(), 0.0);
        let wrong = FieldMap::filled(3, 4, FieldKind::Mask, 0.0);
        assert!(identity_loss(&pred, &eps, &wrong).is_err());
    }

    #[test]
    fn total_is_weighted_sum() {
        let (state, batch) = setup();
        let l = loss_total(&batch, &state, 0.7).unwrap();
        assert!((l.total - (l.denoise + 0.7 * l.identity)).abs() <= 1e-12);
        assert!(l.denoise > 0.0 && l.identity > 0.0);
    }

    #[test]
    fn omega_gradient_vanishes_with_zero_gates() {
        let (state, batch) = setup();
        let (_, g) = loss_and_gradients(&batch, &state, 1.0).unwrap();
        assert_eq!(g.total()[0], [0.0]);
    }

    #[test]
    fn lambda_scales_identity_component() {
        let (mut state, batch) = setup();
        state.randomize_gates(5);
        let (_, g1) = loss_and_gradients(&batch, &state, 0.6).unwrap();
        let (_, g2) = loss_and_gradients(&batch, &state, 1.2).unwrap();
        for (a, b) in g1.identity_component().iter().flatten().zip(g2.identity_component().iter().flatten()) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }
}
