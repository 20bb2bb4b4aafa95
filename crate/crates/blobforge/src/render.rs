//! Scene rendering to scalar fields.

use blobforge_core::blob::ellipse_to_gaussian;
use blobforge_core::field::{blob_mask, blob_opacity, compose_scene, make_grid, scene_feature_map, FieldKind, FieldMap};
use blobforge_core::{BlobScene, ConfidenceLevel};
use serde::{Deserialize, Serialize};

/// Largest accepted render side.
pub const MAX_RENDER_SIDE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenderKind {
    Opacity,
    Composed,
    Mask,
    FeaturePreview,
}

impl std::str::FromStr for RenderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "opacity" => Ok(Self::Opacity),
            "composed" => Ok(Self::Composed),
            "mask" => Ok(Self::Mask),
            "feature-preview" => Ok(Self::FeaturePreview),
            _ => Err(format!("unknown render kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderFormat {
    #[default]
    Png,
    Raw,
}

/// Render request. Missing sizes default to the scene canvas, a missing
/// `p` to the scene confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub kind: RenderKind,
    #[serde(default)]
    pub w: Option<usize>,
    #[serde(default)]
    pub h: Option<usize>,
    #[serde(default)]
    pub p: Option<f64>,
    /// Restrict to one blob instead of the whole scene.
    #[serde(default)]
    pub blob: Option<String>,
    #[serde(default)]
    pub format: RenderFormat,
}

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("render size must be within 1..={MAX_RENDER_SIDE}, got {0}x{1}")]
    BadSize(usize, usize),
    #[error("no blob `{0}` in scene")]
    UnknownBlob(String),
    #[error(transparent)]
    Core(#[from] blobforge_core::Error),
}

fn max_into(acc: &mut FieldMap, other: &FieldMap) {
    for (a, b) in acc.values.iter_mut().zip(&other.values) {
        *a = a.max(*b);
    }
}

/// Renders `params.kind` for the whole scene or one blob.
///
/// Whole-scene opacity is the pointwise maximum over blobs, the composed
/// render is the total coverage `sum_i O_c^i`, and the mask is the union of
/// confidence ellipses. Empty scenes render as zero fields.
pub fn render_field(scene: &BlobScene, params: &RenderParams) -> Result<FieldMap, RenderError> {
    let (w, h) = (params.w.unwrap_or(scene.width()), params.h.unwrap_or(scene.height()));
    if w == 0 || h == 0 || w > MAX_RENDER_SIDE || h > MAX_RENDER_SIDE {
        return Err(RenderError::BadSize(w, h));
    }
    let p = match params.p {
        Some(p) => ConfidenceLevel::new(p)?,
        None => scene.confidence(),
    };
    let grid = make_grid(w, h)?;
    let target = match &params.blob {
        Some(id) => Some(scene.position(id).ok_or_else(|| RenderError::UnknownBlob(id.clone()))?),
        None => None,
    };
    let selected: Vec<usize> = match target {
        Some(i) => vec![i],
        None => (0..scene.len()).collect(),
    };
    let kind = match params.kind {
        RenderKind::Opacity => FieldKind::Opacity,
        RenderKind::Composed => FieldKind::ComposedOpacity,
        RenderKind::Mask => FieldKind::Mask,
        RenderKind::FeaturePreview => FieldKind::FeatureNorm,
    };
    let mut out = FieldMap::filled(w, h, kind, 0.0);
    match params.kind {
        RenderKind::Opacity => {
            for &i in &selected {
                max_into(&mut out, &blob_opacity(&grid, scene.blobs()[i].gaussian())?);
            }
        }
        RenderKind::Mask => {
            for &i in &selected {
                // geometry is stored as an ellipse; re-derive at the requested level
                let g = ellipse_to_gaussian(scene.blobs()[i].ellipse(), p);
                max_into(&mut out, &blob_mask(&g, &grid, p)?);
            }
        }
        RenderKind::Composed => {
            if !scene.is_empty() {
                let layers = compose_scene(scene, &grid)?.layers;
                for &i in &selected {
                    for (a, b) in out.values.iter_mut().zip(&layers[i].values) {
                        *a += b;
                    }
                }
            }
        }
        RenderKind::FeaturePreview => {
            if !scene.is_empty() {
                let features = match target {
                    Some(i) => {
                        let single = BlobScene::new(w, h, scene.confidence(), vec![scene.blobs()[i].clone()])?;
                        scene_feature_map(&single, &grid)?
                    }
                    None => scene_feature_map(scene, &grid)?,
                };
                out = features.norm_field();
            }
        }
    }
    out.kind = kind;
    Ok(out)
}
