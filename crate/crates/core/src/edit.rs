//! Element-level edit operations on [`BlobScene`]s.
//!
//! Every edit returns a new scene in which only the targeted entry differs;
//! all other entries are carried over unchanged. Geometry edits act on the
//! stored ellipse and re-derive the Gaussian at the scene's confidence level.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::blob::BlobEllipse;
use crate::scene::{BlobEntry, BlobScene};
use crate::{Error, Result};

/// Blob payload of an `add` edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewBlob {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub ellipse: BlobEllipse,
    #[serde(default)]
    pub feature: Vec<f64>,
}

/// A single-element edit.
///
/// JSON form is internally tagged by `kind`, e.g.
/// `{"kind":"translate","target_id":"dog","dx":0.1,"dy":0.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EditOp {
    /// Inserts a blob at depth `index` (default: frontmost).
    Add {
        blob: NewBlob,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
    },
    Remove {
        target_id: String,
    },
    Translate {
        target_id: String,
        dx: f64,
        dy: f64,
    },
    /// Multiplies the semi-axes `a` and `b` of the stored ellipse.
    Scale {
        target_id: String,
        s_a: f64,
        s_b: f64,
    },
    /// Adds `dtheta` to the orientation, modulo π.
    Rotate {
        target_id: String,
        dtheta: f64,
    },
    /// Swaps in a new feature, label and/or geometry.
    Replace {
        target_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        feature: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ellipse: Option<BlobEllipse>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    /// Moves a blob to depth `index` (0 = backmost).
    Reorder {
        target_id: String,
        index: usize,
    },
}

impl EditOp {
    pub fn kind(&self) -> &'static str {
        match self {
            EditOp::Add { .. } => "add",
            EditOp::Remove { .. } => "remove",
            EditOp::Translate { .. } => "translate",
            EditOp::Scale { .. } => "scale",
            EditOp::Rotate { .. } => "rotate",
            EditOp::Replace { .. } => "replace",
            EditOp::Reorder { .. } => "reorder",
        }
    }

    pub fn target_id(&self) -> Option<&str> {
        match self {
            EditOp::Add { .. } => None,
            EditOp::Remove { target_id }
            | EditOp::Translate { target_id, .. }
            | EditOp::Scale { target_id, .. }
            | EditOp::Rotate { target_id, .. }
            | EditOp::Replace { target_id, .. }
            | EditOp::Reorder { target_id, .. } => Some(target_id),
        }
    }

    /// Payload checks that do not need the scene.
    pub fn validate(&self) -> Result<()> {
        match self {
            EditOp::Translate { dx, dy, .. } if !(dx.is_finite() && dy.is_finite()) => {
                Err(Error::Validation("translation must be finite".into()))
            }
            EditOp::Scale { s_a, s_b, .. } if !(*s_a > 0.0 && *s_b > 0.0 && s_a.is_finite() && s_b.is_finite()) => {
                Err(Error::Validation("scale factors must be positive and finite".into()))
            }
            EditOp::Rotate { dtheta, .. } if !dtheta.is_finite() => {
                Err(Error::Validation("rotation must be finite".into()))
            }
            EditOp::Replace {
                feature: None,
                ellipse: None,
                label: None,
                ..
            } => Err(Error::Validation("replace needs a feature, ellipse or label".into())),
            _ => Ok(()),
        }
    }
}

/// Applies `op` to `scene`, returning the edited copy.
pub fn apply_edit(scene: &BlobScene, op: &EditOp) -> Result<BlobScene> {
    op.validate()?;
    let p = scene.confidence();
    let mut blobs = scene.blobs().to_vec();
    if let EditOp::Add { blob, index } = op {
        let index = index.unwrap_or(blobs.len());
        if index > blobs.len() {
            return Err(Error::Validation(alloc::format!(
                "insert index {index} beyond scene of {} blobs",
                blobs.len()
            )));
        }
        let entry = BlobEntry::new(blob.id.clone(), blob.label.clone(), blob.ellipse, blob.feature.clone(), p)?;
        blobs.insert(index, entry);
        return scene.with_blobs(blobs);
    }

    let id = op.target_id().unwrap_or_default();
    let i = scene.position(id).ok_or_else(|| Error::NotFound(id.into()))?;
    let e = *blobs[i].ellipse();
    match op {
        EditOp::Add { .. } => unreachable!("handled above"),
        EditOp::Remove { .. } => {
            blobs.remove(i);
        }
        EditOp::Translate { dx, dy, .. } => {
            let moved = BlobEllipse::new(e.cx + dx, e.cy + dy, e.a, e.b, e.theta)?;
            blobs[i] = blobs[i].with_ellipse(moved, p)?;
        }
        EditOp::Scale { s_a, s_b, .. } => {
            let scaled = BlobEllipse::new(e.cx, e.cy, e.a * s_a, e.b * s_b, e.theta)?;
            blobs[i] = blobs[i].with_ellipse(scaled, p)?;
        }
        EditOp::Rotate { dtheta, .. } => {
            let rotated = BlobEllipse::new(e.cx, e.cy, e.a, e.b, e.theta + dtheta)?;
            blobs[i] = blobs[i].with_ellipse(rotated, p)?;
        }
        EditOp::Replace {
            feature,
            ellipse,
            label,
            ..
        } => {
            let mut entry = blobs[i].clone();
            if let Some(f) = feature {
                entry = entry.with_feature(f.clone())?;
            }
            if let Some(g) = ellipse {
                entry = entry.with_ellipse(*g, p)?;
            }
            if let Some(l) = label {
                entry = BlobEntry::new(entry.id(), l.clone(), *entry.ellipse(), entry.feature().to_vec(), p)?;
            }
            blobs[i] = entry;
        }
        EditOp::Reorder { index, .. } => {
            if *index >= blobs.len() {
                return Err(Error::Validation(alloc::format!(
                    "depth index {index} beyond scene of {} blobs",
                    blobs.len()
                )));
            }
            let entry = blobs.remove(i);
            blobs.insert(*index, entry);
        }
    }
    scene.with_blobs(blobs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blob::{ellipse_to_gaussian, ConfidenceLevel};
    use alloc::vec;

    fn scene() -> BlobScene {
        let p = ConfidenceLevel::default();
        let blobs = vec![
            BlobEntry::new("sky", "sky", BlobEllipse::new(0.5, 0.2, 0.4, 0.1, 0.0).unwrap(), vec![0.1, 0.2], p).unwrap(),
            BlobEntry::new("dog", "dog", BlobEllipse::new(0.4, 0.6, 0.2, 0.1, 0.3).unwrap(), vec![1.0, 0.0], p).unwrap(),
            BlobEntry::new("cat", "cat", BlobEllipse::new(0.7, 0.7, 0.1, 0.05, 1.2).unwrap(), vec![0.0, 1.0], p).unwrap(),
        ];
        BlobScene::new(64, 64, p, blobs).unwrap()
    }

    #[test]
    fn zero_translation_is_identity() {
        let s = scene();
        let op = EditOp::Translate {
            target_id: "dog".into(),
            dx: 0.0,
            dy: 0.0,
        };
        assert_eq!(apply_edit(&s, &op).unwrap(), s);
    }

    #[test]
    fn scale_rederives_gaussian() {
        let s = scene();
        let op = EditOp::Scale {
            target_id: "dog".into(),
            s_a: 1.5,
            s_b: 1.0,
        };
        let out = apply_edit(&s, &op).unwrap();
        let dog = out.get("dog").unwrap();
        assert!((dog.ellipse().a - 0.3).abs() < 1e-15);
        assert_eq!(*dog.gaussian(), ellipse_to_gaussian(dog.ellipse(), s.confidence()));
        assert_eq!(out.blobs()[0], s.blobs()[0]);
        assert_eq!(out.blobs()[2], s.blobs()[2]);
    }

    #[test]
    fn remove_then_add_restores() {
        let s = scene();
        let dog = s.get("dog").unwrap().clone();
        let removed = apply_edit(&s, &EditOp::Remove { target_id: "dog".into() }).unwrap();
        assert_eq!(removed.len(), 2);
        let op = EditOp::Add {
            blob: NewBlob {
                id: dog.id().into(),
                label: dog.label().into(),
                ellipse: *dog.ellipse(),
                feature: dog.feature().to_vec(),
            },
            index: Some(1),
        };
        assert_eq!(apply_edit(&removed, &op).unwrap(), s);
    }

    #[test]
    fn errors() {
        let s = scene();
        let unknown = EditOp::Rotate {
            target_id: "ghost".into(),
            dtheta: 0.1,
        };
        assert!(matches!(apply_edit(&s, &unknown), Err(Error::NotFound(_))));
        let bad_scale = EditOp::Scale {
            target_id: "dog".into(),
            s_a: 0.0,
            s_b: 1.0,
        };
        assert!(matches!(apply_edit(&s, &bad_scale), Err(Error::Validation(_))));
        let dup = EditOp::Add {
            blob: NewBlob {
                id: "dog".into(),
                label: String::new(),
                ellipse: BlobEllipse::new(0.5, 0.5, 0.1, 0.1, 0.0).unwrap(),
                feature: vec![0.0, 0.0],
            },
            index: None,
        };
        assert!(apply_edit(&s, &dup).is_err());
        let empty_replace = EditOp::Replace {
            target_id: "dog".into(),
            feature: None,
            ellipse: None,
            label: None,
        };
        assert!(apply_edit(&s, &empty_replace).is_err());
        let wrong_dim = EditOp::Replace {
            target_id: "dog".into(),
            feature: Some(vec![1.0]),
            ellipse: None,
            label: None,
        };
        assert!(matches!(apply_edit(&s, &wrong_dim), Err(Error::Shape(_))));
    }

    #[test]
    fn reorder_to_front() {
        let s = scene();
        let out = apply_edit(
            &s,
            &EditOp::Reorder {
                target_id: "sky".into(),
                index: 2,
            },
        )
        .unwrap();
        let ids: Vec<_> = out.blobs().iter().map(|b| b.id()).collect();
        assert_eq!(ids, ["dog", "cat", "sky"]);
    }

    #[test]
    fn json_contract() {
        let op: EditOp = serde_json::from_str(r#"{"kind":"translate","target_id":"dog","dx":0.1,"dy":-0.2}"#).unwrap();
        assert_eq!(
            op,
            EditOp::Translate {
                target_id: "dog".into(),
                dx: 0.1,
                dy: -0.2
            }
        );
        let s = serde_json::to_string(&EditOp::Scale {
            target_id: "dog".into(),
            s_a: 2.0,
            s_b: 1.0,
        })
        .unwrap();
        assert_eq!(s, r#"{"kind":"scale","target_id":"dog","s_a":2.0,"s_b":1.0}"#);
        assert!(serde_json::from_str::<EditOp>(r#"{"kind":"translate","target_id":"dog","dx":0.1}"#).is_err());
    }
}
