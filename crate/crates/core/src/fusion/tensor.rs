use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::{FeatureMap, FieldMap};
use crate::math::{self, TAU};
use crate::{Error, Result};

/// Channel-major `c x h x w` tensor, `values[(ch * h + y) * w + x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl LatentTensor {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Domain("tensor spatial dimensions must be positive"));
        }
        if values.len() != channels * height * width {
            return Err(Error::Shape(alloc::format!(
                "tensor {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("tensor values must be finite".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, v: f64) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![v; channels * height * width],
        }
    }

    /// Seeded standard-normal tensor (Box-Muller).
    pub fn gaussian(channels: usize, height: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = channels * height * width;
        let mut values = Vec::with_capacity(n + 1);
        while values.len() < n {
            let u1 = 1.0 - rng.gen::<f64>();
            let u2 = rng.gen::<f64>();
            let r = math::sqrt(-2.0 * libm::log(u1));
            values.push(r * math::cos(TAU * u2));
            values.push(r * math::sin(TAU * u2));
        }
        values.truncate(n);
        Self {
            channels,
            height,
            width,
            values,
        }
    }

    /// Single-channel tensor from a scalar field.
    pub fn from_field(f: &FieldMap) -> Self {
        Self {
            channels: 1,
            height: f.height,
            width: f.width,
            values: f.values.clone(),
        }
    }

    /// `d x h x w` tensor from an `h x w x d` feature map.
    pub fn from_features(f: &FeatureMap) -> Self {
        let mut t = Self::zeros(f.depth, f.height, f.width);
        for y in 0..f.height {
            for x in 0..f.width {
                for (k, &v) in f.cell(x, y).iter().enumerate() {
                    t.set(k, y, x, v);
                }
            }
        }
        t
    }

    #[inline]
    pub fn index(&self, ch: usize, y: usize, x: usize) -> usize {
        (ch * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, ch: usize, y: usize, x: usize) -> f64 {
        self.values[self.index(ch, y, x)]
    }

    #[inline]
    pub fn set(&mut self, ch: usize, y: usize, x: usize, v: f64) {
        let i = self.index(ch, y, x);
        self.values[i] = v;
    }

    pub fn same_shape(&self, other: &LatentTensor) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_shape(&self, other: &LatentTensor, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(alloc::format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.channels,
                self.height,
                self.width,
                other.channels,
                other.height,
                other.width
            )))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Channel-wise concatenation.
    pub fn concat_channels(parts: &[&LatentTensor]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Domain("nothing to concatenate"))?;
        let mut values = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.height != first.height || p.width != first.width {
                return Err(Error::Shape(alloc::format!(
                    "channel concat needs equal spatial dims: {}x{} vs {}x{}",
                    first.height,
                    first.width,
                    p.height,
                    p.width
                )));
            }
            values.extend_from_slice(&p.values);
            channels += p.channels;
        }
        Ok(Self {
            channels,
            height: first.height,
            width: first.width,
            values,
        })
    }

    /// Concatenation along the width axis: `left` then `right`.
    pub fn concat_width(left: &LatentTensor, right: &LatentTensor) -> Result<Self> {
        if left.channels != right.channels || left.height != right.height {
            return Err(Error::Shape("width concat needs equal channels and height".into()));
        }
        let width = left.width + right.width;
        let mut values = Vec::with_capacity(left.channels * left.height * width);
        for ch in 0..left.channels {
            for y in 0..left.height {
                let l = left.index(ch, y, 0);
                let r = right.index(ch, y, 0);
                values.extend_from_slice(&left.values[l..l + left.width]);
                values.extend_from_slice(&right.values[r..r + right.width]);
            }
        }
        Ok(Self {
            channels: left.channels,
            height: left.height,
            width,
            values,
        })
    }

    /// Copy of channels `start..start + len` and columns `x0..x0 + w`.
    pub fn slice(&self, start: usize, len: usize, x0: usize, w: usize) -> Self {
        let mut out = Self::zeros(len, self.height, w);
        for ch in 0..len {
            for y in 0..self.height {
                let src = self.index(start + ch, y, x0);
                let dst = out.index(ch, y, 0);
                out.values[dst..dst + w].copy_from_slice(&self.values[src..src + w]);
            }
        }
        out
    }

    /// `k x k` average pooling; dimensions must be divisible by `k`.
    pub fn avg_pool(&self, k: usize) -> Self {
        if k == 1 {
            return self.clone();
        }
        let (h, w) = (self.height / k, self.width / k);
        let inv = 1.0 / (k * k) as f64;
        let mut out = Self::zeros(self.channels, h, w);
        for ch in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    let mut s = 0.0;
                    for dy in 0..k {
                        for dx in 0..k {
                            s += self.get(ch, y * k + dy, x * k + dx);
                        }
                    }
                    out.set(ch, y, x, s * inv);
                }
            }
        }
        out
    }

    /// Nearest-neighbour upsampling by `k`, mirroring [`avg_pool`](Self::avg_pool).
    pub fn upsample(&self, k: usize) -> Self {
        if k == 1 {
            return self.clone();
        }
        let mut out = Self::zeros(self.channels, self.height * k, self.width * k);
        for ch in 0..self.channels {
            for y in 0..out.height {
                for x in 0..out.width {
                    out.set(ch, y, x, self.get(ch, y / k, x / k));
                }
            }
        }
        out
    }

    /// `k x k` block sums: the adjoint of [`upsample`](Self::upsample).
    pub fn block_sum(&self, k: usize) -> Self {
        if k == 1 {
            return self.clone();
        }
        let mut pooled = self.avg_pool(k);
        let scale = (k * k) as f64;
        for v in &mut pooled.values {
            *v *= scale;
        }
        pooled
    }

    pub fn add_assign(&mut self, other: &LatentTensor) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }
}
