use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::batch::BatchParts;
use super::dropout::{apply_dropout, dropout_flags, DropoutProbs};
use super::grad::{grad_check, GradCheck, DEFAULT_FD_STEP};
use super::loss::{forward, identity_loss, loss_and_gradients, loss_total};
use super::model::{HarnessConfig, HarnessState};
use super::schedule::lambda_schedule;
use crate::Result;

/// Tolerance for the gradient check.
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Tolerance for the loss decomposition.
pub const LOSS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub seed: u64,
    /// Latent side length.
    pub size: usize,
    pub levels: usize,
    /// Seeded draws for the dropout-rate estimate.
    pub dropout_draws: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            size: 8,
            levels: 2,
            dropout_draws: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub options: CheckOptions,
    pub invariants: Vec<InvariantResult>,
    pub grad_check: GradCheck,
    pub passed: bool,
}

fn record(out: &mut Vec<InvariantResult>, name: &str, passed: bool, detail: String) {
    out.push(InvariantResult {
        name: name.into(),
        passed,
        detail,
    });
}

/// Runs every harness invariant on a seeded toy state and batch.
pub fn run_checks(opts: CheckOptions) -> Result<HarnessReport> {
    let config = HarnessConfig {
        levels: opts.levels,
        seed: opts.seed,
        ..Default::default()
    };
    let fresh = HarnessState::new(config.clone())?;
    let parts = BatchParts::synthetic(opts.size, config.latent_channels, config.feature_dim, config.steps, opts.seed)?;
    let batch = parts.assemble(&fresh.schedule)?;
    let mut out = Vec::new();

    let level_shapes: Vec<usize> = fresh.fg_features(&batch.x1, batch.t)?.0.iter().map(|f| f.height).collect();
    let expected: Vec<usize> = (0..opts.levels).map(|i| opts.size >> i).collect();
    record(&mut out, "level_shapes", level_shapes == expected, format!("heights {level_shapes:?}"));

    let bg = fresh.bg_prediction(&batch.x0, batch.t)?;
    let mut zero_init = true;
    for omega in [0.0, 0.3, 1.0] {
        let mut s = fresh.clone();
        s.omega = omega;
        zero_init &= s.fused_prediction(&batch.x0, &batch.x1, batch.t)? == bg;
    }
    record(&mut out, "zero_init_equivalence", zero_init, "omega in {0, 0.3, 1}, bit-exact".into());

    let mut trained = fresh.clone();
    trained.randomize_gates(opts.seed ^ 0x5eed);
    trained.omega = 0.0;
    let off = trained.fused_prediction(&batch.x0, &batch.x1, batch.t)? == bg;
    record(&mut out, "omega_zero_disables_fusion", off, "trained gates, bit-exact".into());

    let at = |w: f64| -> Result<Vec<f64>> {
        let mut s = trained.clone();
        s.omega = w;
        Ok(s.fused_prediction(&batch.x0, &batch.x1, batch.t)?.values)
    };
    let (p0, p5, p1) = (at(0.0)?, at(0.5)?, at(1.0)?);
    let affine = p0
        .iter()
        .zip(&p5)
        .zip(&p1)
        .map(|((a, m), b)| (m - 0.5 * (a + b)).abs())
        .fold(0.0f64, f64::max);
    record(&mut out, "affine_in_omega", affine <= 1e-12, format!("max deviation {affine:e}"));

    trained.omega = 0.7;
    let mut decomposition = 0.0f64;
    for lambda in [0.6, 0.8, 1.0] {
        let l = loss_total(&batch, &trained, lambda)?;
        decomposition = decomposition.max((l.total - (l.denoise + lambda * l.identity)).abs());
    }
    record(
        &mut out,
        "loss_decomposition",
        decomposition <= LOSS_TOLERANCE,
        format!("max |total - (denoise + lambda identity)| = {decomposition:e}"),
    );

    let trace = forward(&trained, &batch)?;
    let before = identity_loss(&trace.fg_pred, &batch.eps, &batch.m1)?;
    let mut perturbed = trace.fg_pred.clone();
    let plane = perturbed.height * perturbed.width;
    for (k, v) in perturbed.values.iter_mut().enumerate() {
        if batch.m1.values[k % plane] == 0.0 {
            *v += 1e3 * (k as f64 + 1.0);
        }
    }
    let after = identity_loss(&perturbed, &batch.eps, &batch.m1)?;
    record(&mut out, "mask_annihilation", before == after, format!("identity {before} -> {after}"));

    let (_, g_fresh) = loss_and_gradients(&batch, &fresh, 1.0)?;
    let omega_grad = g_fresh.total()[0][0];
    record(&mut out, "omega_gradient_zero_at_init", omega_grad == 0.0, format!("{omega_grad:e}"));

    let (_, g1) = loss_and_gradients(&batch, &trained, 0.5)?;
    let (_, g2) = loss_and_gradients(&batch, &trained, 1.0)?;
    let doubling = g1
        .identity_component()
        .iter()
        .flatten()
        .zip(g2.identity_component().iter().flatten())
        .map(|(a, b)| (2.0 * a - b).abs())
        .fold(0.0f64, f64::max);
    record(&mut out, "lambda_doubles_identity_gradient", doubling <= 1e-15, format!("max deviation {doubling:e}"));

    let total_steps = 1000;
    let (start, end) = (lambda_schedule(0, total_steps)?, lambda_schedule(total_steps, total_steps)?);
    record(
        &mut out,
        "lambda_endpoints",
        start == 1.0 && end == 0.6,
        format!("step 0 -> {start}, step {total_steps} -> {end}"),
    );

    let probs = DropoutProbs::uniform(0.1);
    let mut hits = [0u64; 3];
    for s in 0..opts.dropout_draws {
        let f = dropout_flags(s, probs)?;
        hits[0] += f.omega as u64;
        hits[1] += f.feat as u64;
        hits[2] += f.vae as u64;
    }
    let rates = hits.map(|h| h as f64 / opts.dropout_draws.max(1) as f64);
    record(
        &mut out,
        "dropout_rates",
        rates.iter().all(|r| (r - 0.1).abs() <= 0.01),
        format!("omega {:.4}, feat {:.4}, vae {:.4}", rates[0], rates[1], rates[2]),
    );
    let deterministic = apply_dropout(&parts, 1.0, opts.seed, probs)? == apply_dropout(&parts, 1.0, opts.seed, probs)?;
    record(&mut out, "dropout_determinism", deterministic, "same seed, same output".into());

    let grad = grad_check(&trained, &batch, 0.8, DEFAULT_FD_STEP)?;
    record(
        &mut out,
        "gradient_check",
        grad.max_relative_error <= GRAD_TOLERANCE,
        format!("max relative error {:e} over {} parameters", grad.max_relative_error, grad.parameters),
    );

    Ok(HarnessReport {
        passed: out.iter().all(|r| r.passed),
        options: opts,
        invariants: out,
        grad_check: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_report_passes() {
        let report = run_checks(CheckOptions {
            dropout_draws: 20_000,
            ..Default::default()
        })
        .unwrap();
        for r in &report.invariants {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
        assert!(report.passed);
    }
}
