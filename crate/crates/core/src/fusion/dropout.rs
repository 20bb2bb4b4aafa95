use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::BatchParts;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutProbs {
    /// Disables fusion (`omega <- 0`).
    pub omega: f64,
    /// Zeroes the splatted features `F1`.
    pub feat: f64,
    /// Zeroes the element latent `z1`.
    pub vae: f64,
}

impl DropoutProbs {
    pub const fn uniform(p: f64) -> Self {
        Self { omega: p, feat: p, vae: p }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.omega, self.feat, self.vae].iter().all(|p| (0.0..=1.0).contains(p)) {
            Ok(())
        } else {
            Err(Error::Domain("dropout probabilities must lie in [0, 1]"))
        }
    }
}

impl Default for DropoutProbs {
    fn default() -> Self {
        Self::uniform(0.1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropoutFlags {
    pub omega: bool,
    pub feat: bool,
    pub vae: bool,
}

/// Draws the three flags for `seed`, each firing independently.
pub fn dropout_flags(seed: u64, probs: DropoutProbs) -> Result<DropoutFlags> {
    probs.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fire = |p: f64| rng.gen::<f64>() < p;
    Ok(DropoutFlags {
        omega: fire(probs.omega),
        feat: fire(probs.feat),
        vae: fire(probs.vae),
    })
}

/// Applies seeded dropout to the fusion weight and foreground inputs.
pub fn apply_dropout(parts: &BatchParts, omega: f64, seed: u64, probs: DropoutProbs) -> Result<(BatchParts, f64, DropoutFlags)> {
    let flags = dropout_flags(seed, probs)?;
    let mut out = parts.clone();
    if flags.feat {
        out.f1.values.fill(0.0);
    }
    if flags.vae {
        out.z1.values.fill(0.0);
    }
    Ok((out, if flags.omega { 0.0 } else { omega }, flags))
}
