use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::input::{build_bg_input, build_fg_input, InContextInput};
use super::schedule::{diffuse_forward, NoiseSchedule};
use super::tensor::LatentTensor;
use crate::blob::{BlobEllipse, ConfidenceLevel};
use crate::field::{blob_mask, blob_opacity, make_grid, splat, FeatureMap, FieldKind, FieldMap};
use crate::{Error, Result};

/// Unassembled training inputs. Dropout acts on these before assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchParts {
    /// Foreground element latent.
    pub z1: LatentTensor,
    pub oc1: FieldMap,
    pub f1: FeatureMap,
    /// Background latent.
    pub z0: LatentTensor,
    pub oc0: FieldMap,
    /// Noise shared by both branches.
    pub eps: LatentTensor,
    /// Foreground mask `M1` over the noisy half.
    pub m1: FieldMap,
    pub t: usize,
}

/// An assembled batch ready for the forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessBatch {
    pub x0: InContextInput,
    pub x1: InContextInput,
    pub t: usize,
    pub eps: LatentTensor,
    pub m1: FieldMap,
}

impl BatchParts {
    /// Seeded latents with one random blob supplying `oc1`, `F1` and `M1`;
    /// the background opacity is the blob's complement.
    pub fn synthetic(size: usize, channels: usize, feature_dim: usize, steps: usize, seed: u64) -> Result<Self> {
        if size == 0 || steps == 0 {
            return Err(Error::Domain("batch size and step count must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ellipse = BlobEllipse::new(
            rng.gen_range(0.35..0.65),
            rng.gen_range(0.35..0.65),
            rng.gen_range(0.2..0.35),
            rng.gen_range(0.1..0.2),
            rng.gen_range(0.0..core::f64::consts::PI),
        )?;
        let p = ConfidenceLevel::default();
        let g = crate::blob::ellipse_to_gaussian(&ellipse, p);
        let grid = make_grid(size, size)?;
        let oc1 = blob_opacity(&grid, &g)?;
        let mut oc0 = oc1.clone();
        for v in &mut oc0.values {
            *v = 1.0 - *v;
        }
        let feature: Vec<f64> = (0..feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f1 = splat(&feature, &oc1);
        let m1 = blob_mask(&g, &grid, p)?;
        let t = rng.gen_range(1..=steps);
        let base = rng.gen::<u64>();
        Ok(Self {
            z1: LatentTensor::gaussian(channels, size, size, base),
            z0: LatentTensor::gaussian(channels, size, size, base.wrapping_add(1)),
            eps: LatentTensor::gaussian(channels, size, size, base.wrapping_add(2)),
            oc1,
            f1,
            oc0,
            m1,
            t,
        })
    }

    /// Diffuses both latents with the shared noise and builds the in-context inputs.
    pub fn assemble(&self, schedule: &NoiseSchedule) -> Result<HarnessBatch> {
        if self.m1.width != self.eps.width || self.m1.height != self.eps.height {
            return Err(Error::Shape("mask and noise differ in size".into()));
        }
        let zt = diffuse_forward(&self.z0, self.t, &self.eps, schedule)?;
        let zt1 = diffuse_forward(&self.z1, self.t, &self.eps, schedule)?;
        Ok(HarnessBatch {
            x0: build_bg_input(&self.z0, &self.oc0, &zt)?,
            x1: build_fg_input(&self.z1, &self.oc1, &self.f1, &zt1)?,
            t: self.t,
            eps: self.eps.clone(),
            m1: self.m1.clone(),
        })
    }
}

impl HarnessBatch {
    pub fn validate(&self) -> Result<()> {
        if self.m1.kind != FieldKind::Mask && self.m1.values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Validation("mask values must lie in [0, 1]".into()));
        }
        if self.m1.width != self.eps.width || self.m1.height != self.eps.height {
            return Err(Error::Shape(alloc::format!(
                "mask is {}x{}, noise is {}x{}",
                self.m1.width,
                self.m1.height,
                self.eps.width,
                self.eps.height
            )));
        }
        if self.x0.layout.half_width != self.eps.width || self.x1.layout.half_width != self.eps.width {
            return Err(Error::Shape("input halves do not match the noise width".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_batch_shapes() {
        let parts = BatchParts::synthetic(8, 4, 3, 10, 7).unwrap();
        let b = parts.assemble(&NoiseSchedule::default()).unwrap();
        assert_eq!((b.x1.tensor.channels, b.x1.tensor.height, b.x1.tensor.width), (8, 8, 16));
        assert_eq!((b.x0.tensor.channels, b.x0.tensor.width), (5, 16));
        assert!(b.m1.count_set() > 0);
        b.validate().unwrap();
        assert_eq!(parts, BatchParts::synthetic(8, 4, 3, 10, 7).unwrap());
    }
}
