//! Grounding and image-quality benchmarks over directories.

use std::collections::BTreeMap;
use std::path::Path;

use blobforge_core::metrics::{psnr, ssim, GroundingReport, GroundingRow};
use blobforge_core::raster::Mask;
use blobforge_core::BlobEllipse;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::formats::{png_to_mask, png_to_raster, FormatError};

/// Ground truth as `{name: ellipse}`.
pub type GroundTruth = BTreeMap<String, BlobEllipse>;

/// Scores `DIR/NAME.png` masks against the ground truth. A missing mask
/// file counts as an unfittable prediction.
pub fn grounding_bench(pred_dir: &Path, gt: &GroundTruth) -> Result<GroundingReport, FormatError> {
    let rows: Result<Vec<GroundingRow>, FormatError> = gt
        .par_iter()
        .map(|(name, ellipse)| {
            let path = pred_dir.join(format!("{name}.png"));
            let mask = match std::fs::read(&path) {
                Ok(bytes) => png_to_mask(&bytes)?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Mask::empty(1, 1),
                Err(e) => return Err(e.into()),
            };
            Ok(GroundingRow::evaluate(name.clone(), &mask, ellipse))
        })
        .collect();
    Ok(GroundingReport::from_rows(rows?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub name: String,
    /// `None` for identical images.
    pub psnr: Option<f64>,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub rows: Vec<ImageRow>,
    /// Mean over finite PSNR values.
    pub mean_psnr: Option<f64>,
    pub mean_ssim: Option<f64>,
}

/// Compares each `DIR/NAME.png` with `DIR/NAME.ref.png`.
pub fn image_bench(dir: &Path) -> Result<ImageReport, FormatError> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let file = entry?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = file.strip_suffix(".ref.png") {
            names.push(stem.to_string());
        }
    }
    names.sort();
    let rows: Result<Vec<ImageRow>, FormatError> = names
        .par_iter()
        .map(|name| {
            let pred = png_to_raster(&std::fs::read(dir.join(format!("{name}.png")))?)?;
            let reference = png_to_raster(&std::fs::read(dir.join(format!("{name}.ref.png")))?)?;
            let p = psnr(&pred, &reference)?;
            Ok(ImageRow {
                name: name.clone(),
                psnr: p.is_finite().then_some(p),
                ssim: ssim(&pred, &reference)?,
            })
        })
        .collect();
    let rows = rows?;
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(ImageReport {
        mean_psnr: mean(rows.iter().filter_map(|r| r.psnr).collect()),
        mean_ssim: mean(rows.iter().map(|r| r.ssim).collect()),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grounding: Option<GroundingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images: Option<ImageReport>,
}
