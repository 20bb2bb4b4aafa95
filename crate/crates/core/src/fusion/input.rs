use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tensor::LatentTensor;
use crate::field::{FeatureMap, FieldMap};
use crate::{Error, Result};

/// Channel groups of an in-context input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    /// Condition latent on the left half, noisy latent on the right.
    Latent,
    Opacity,
    Features,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelGroup {
    pub group: Group,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    Condition,
    Noisy,
}

/// How an [`InContextInput`] was assembled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InContextLayout {
    pub groups: Vec<ChannelGroup>,
    /// Width of each half; the tensor is twice as wide.
    pub half_width: usize,
}

/// Condition and noisy tensors stacked channel-wise, then placed side by
/// side along the width axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InContextInput {
    pub tensor: LatentTensor,
    pub layout: InContextLayout,
}

impl InContextInput {
    pub fn half(&self, half: Half) -> LatentTensor {
        let w = self.layout.half_width;
        let x0 = match half {
            Half::Condition => 0,
            Half::Noisy => w,
        };
        self.tensor.slice(0, self.tensor.channels, x0, w)
    }

    pub fn condition_half(&self) -> LatentTensor {
        self.half(Half::Condition)
    }

    pub fn noisy_half(&self) -> LatentTensor {
        self.half(Half::Noisy)
    }

    /// One channel group of one half.
    pub fn group(&self, group: Group, half: Half) -> Option<LatentTensor> {
        let g = self.layout.groups.iter().find(|g| g.group == group)?;
        let w = self.layout.half_width;
        let x0 = if half == Half::Condition { 0 } else { w };
        Some(self.tensor.slice(g.start, g.len, x0, w))
    }

    pub fn channels(&self) -> usize {
        self.tensor.channels
    }
}

fn assemble(parts: &[(Group, &LatentTensor, &LatentTensor)]) -> Result<InContextInput> {
    let mut groups = Vec::with_capacity(parts.len());
    let mut start = 0;
    for (group, cond, noisy) in parts {
        cond.check_shape(noisy, "condition/noisy group")?;
        groups.push(ChannelGroup {
            group: *group,
            start,
            len: cond.channels,
        });
        start += cond.channels;
    }
    let conds: Vec<&LatentTensor> = parts.iter().map(|p| p.1).collect();
    let noisy: Vec<&LatentTensor> = parts.iter().map(|p| p.2).collect();
    let c = LatentTensor::concat_channels(&conds)?;
    let n = LatentTensor::concat_channels(&noisy)?;
    Ok(InContextInput {
        layout: InContextLayout {
            groups,
            half_width: c.width,
        },
        tensor: LatentTensor::concat_width(&c, &n)?,
    })
}

fn check_spatial(what: &str, latent: &LatentTensor, h: usize, w: usize) -> Result<()> {
    if latent.height != h || latent.width != w {
        return Err(Error::Shape(alloc::format!(
            "{what} is {}x{}, opacity map is {h}x{w}",
            latent.height,
            latent.width
        )));
    }
    Ok(())
}

/// Foreground in-context input: `(z1, oc1, F1)` beside `(zt1, oc1, F1)`,
/// shape `(c + 1 + d) x h x 2w`.
pub fn build_fg_input(z1: &LatentTensor, oc1: &FieldMap, f1: &FeatureMap, zt1: &LatentTensor) -> Result<InContextInput> {
    let (h, w) = (oc1.height, oc1.width);
    check_spatial("z1", z1, h, w)?;
    check_spatial("zt1", zt1, h, w)?;
    if f1.height != h || f1.width != w {
        return Err(Error::Shape("feature map and opacity map differ in size".into()));
    }
    let oc = LatentTensor::from_field(oc1);
    let f = LatentTensor::from_features(f1);
    assemble(&[(Group::Latent, z1, zt1), (Group::Opacity, &oc, &oc), (Group::Features, &f, &f)])
}

/// Background in-context input: `(z0, oc0)` beside `(zt, oc0)`, shape
/// `(c + 1) x h x 2w`.
pub fn build_bg_input(z0: &LatentTensor, oc0: &FieldMap, zt: &LatentTensor) -> Result<InContextInput> {
    let (h, w) = (oc0.height, oc0.width);
    check_spatial("z0", z0, h, w)?;
    check_spatial("zt", zt, h, w)?;
    let oc = LatentTensor::from_field(oc0);
    assemble(&[(Group::Latent, z0, zt), (Group::Opacity, &oc, &oc)])
}
