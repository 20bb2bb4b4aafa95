//! Depth-ordered blob scenes.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::blob::{ellipse_to_gaussian, gaussian_to_ellipse, BlobEllipse, BlobGaussian, ConfidenceLevel};
use crate::field::CoordGrid;
use crate::{Error, Result};

/// One blob of a scene.
///
/// The ellipse is the editable geometry; the Gaussian is always derived from
/// it at the scene's confidence level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlobEntry {
    id: String,
    #[serde(default)]
    label: String,
    ellipse: BlobEllipse,
    gaussian: BlobGaussian,
    feature: Vec<f64>,
}

impl BlobEntry {
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        ellipse: BlobEllipse,
        feature: Vec<f64>,
        p: ConfidenceLevel,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Validation("blob id must not be empty".into()));
        }
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature vector must be finite".into()));
        }
        let gaussian = ellipse_to_gaussian(&ellipse, p);
        BlobGaussian::new(gaussian.mu, gaussian.sigma)?;
        Ok(Self {
            id,
            label: label.into(),
            ellipse,
            gaussian,
            feature,
        })
    }

    /// Entry whose geometry is the canonical ellipse of `g`.
    pub fn from_gaussian(
        id: impl Into<String>,
        label: impl Into<String>,
        g: &BlobGaussian,
        feature: Vec<f64>,
        p: ConfidenceLevel,
    ) -> Result<Self> {
        let ellipse = gaussian_to_ellipse(g, p)?;
        Self::new(id, label, ellipse, feature, p)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn ellipse(&self) -> &BlobEllipse {
        &self.ellipse
    }

    pub fn gaussian(&self) -> &BlobGaussian {
        &self.gaussian
    }

    pub fn feature(&self) -> &[f64] {
        &self.feature
    }

    pub(crate) fn with_ellipse(&self, ellipse: BlobEllipse, p: ConfidenceLevel) -> Result<Self> {
        Self::new(self.id.clone(), self.label.clone(), ellipse, self.feature.clone(), p)
    }

    pub(crate) fn with_feature(&self, feature: Vec<f64>) -> Result<Self> {
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature vector must be finite".into()));
        }
        Ok(Self {
            feature,
            ..self.clone()
        })
    }
}

#[derive(Deserialize)]
struct RawEntry {
    id: String,
    #[serde(default)]
    label: String,
    ellipse: BlobEllipse,
    #[serde(default)]
    feature: Vec<f64>,
}

/// Depth-ordered list of blobs on a canvas; index 0 is the backmost blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScene")]
pub struct BlobScene {
    width: usize,
    height: usize,
    confidence: ConfidenceLevel,
    blobs: Vec<BlobEntry>,
}

#[derive(Deserialize)]
struct RawScene {
    width: usize,
    height: usize,
    #[serde(default)]
    confidence: Option<ConfidenceLevel>,
    #[serde(default)]
    blobs: Vec<RawEntry>,
}

impl TryFrom<RawScene> for BlobScene {
    type Error = Error;

    fn try_from(raw: RawScene) -> Result<Self> {
        let p = raw.confidence.unwrap_or_default();
        let blobs = raw
            .blobs
            .into_iter()
            .map(|e| BlobEntry::new(e.id, e.label, e.ellipse, e.feature, p))
            .collect::<Result<Vec<_>>>()?;
        BlobScene::new(raw.width, raw.height, p, blobs)
    }
}

impl BlobScene {
    pub fn new(width: usize, height: usize, confidence: ConfidenceLevel, blobs: Vec<BlobEntry>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain("canvas dimensions must be positive"));
        }
        let scene = Self {
            width,
            height,
            confidence,
            blobs,
        };
        scene.check_invariants()?;
        Ok(scene)
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, ConfidenceLevel::default(), Vec::new())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn confidence(&self) -> ConfidenceLevel {
        self.confidence
    }

    pub fn grid(&self) -> CoordGrid {
        CoordGrid {
            width: self.width,
            height: self.height,
        }
    }

    pub fn blobs(&self) -> &[BlobEntry] {
        &self.blobs
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.blobs.iter().position(|b| b.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&BlobEntry> {
        self.blobs.iter().find(|b| b.id == id)
    }

    /// Shared feature dimension, `None` for an empty scene.
    pub fn feature_dim(&self) -> Option<usize> {
        self.blobs.first().map(|b| b.feature.len())
    }

    pub(crate) fn with_blobs(&self, blobs: Vec<BlobEntry>) -> Result<Self> {
        Self::new(self.width, self.height, self.confidence, blobs)
    }

    fn check_invariants(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for b in &self.blobs {
            if !ids.insert(b.id.as_str()) {
                return Err(Error::Validation(alloc::format!("duplicate blob id `{}`", b.id)));
            }
        }
        if let Some(d) = self.feature_dim() {
            if let Some(b) = self.blobs.iter().find(|b| b.feature.len() != d) {
                return Err(Error::Shape(alloc::format!(
                    "blob `{}` has feature dimension {}, scene uses {d}",
                    b.id,
                    b.feature.len()
                )));
            }
        }
        Ok(())
    }
}
