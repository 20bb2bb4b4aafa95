//! Grounding accuracy and image-quality metrics.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::blob::BlobEllipse;
use crate::curation::{fit_ellipse_to_mask, FitError};
use crate::math::{self, PI};
use crate::raster::{Mask, Raster};
use crate::{Error, Result};

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const PIXEL_MAX: f64 = 255.0;

/// Squared errors over `(cx, cy, a, b, theta / π)` between two canonical
/// ellipses. The orientation term uses the wrap-around distance modulo π.
pub fn ellipse_sq_errors(fitted: &BlobEllipse, gt: &BlobEllipse) -> [f64; 5] {
    let (f, g) = (fitted.canonical(), gt.canonical());
    let dt = math::angular_distance(f.theta, g.theta) / PI;
    [
        (f.cx - g.cx) * (f.cx - g.cx),
        (f.cy - g.cy) * (f.cy - g.cy),
        (f.a - g.a) * (f.a - g.a),
        (f.b - g.b) * (f.b - g.b),
        dt * dt,
    ]
}

/// Mean of [`ellipse_sq_errors`].
pub fn ellipse_param_mse(fitted: &BlobEllipse, gt: &BlobEllipse) -> f64 {
    ellipse_sq_errors(fitted, gt).iter().sum::<f64>() / 5.0
}

/// Refits an ellipse to `pred_mask` and scores it against `gt`.
pub fn grounding_mse(pred_mask: &Mask, gt: &BlobEllipse) -> Result<f64, FitError> {
    let fitted = fit_ellipse_to_mask(pred_mask)?;
    Ok(ellipse_param_mse(&fitted, gt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRow {
    pub name: alloc::string::String,
    pub ground_truth: BlobEllipse,
    /// `None` when the mask could not be fitted.
    pub fitted: Option<BlobEllipse>,
    pub sq_errors: Option<[f64; 5]>,
    pub mse: Option<f64>,
}

impl GroundingRow {
    pub fn evaluate(name: impl Into<alloc::string::String>, pred_mask: &Mask, gt: &BlobEllipse) -> Self {
        let fitted = fit_ellipse_to_mask(pred_mask).ok();
        let sq_errors = fitted.as_ref().map(|f| ellipse_sq_errors(f, gt));
        Self {
            name: name.into(),
            ground_truth: *gt,
            fitted,
            mse: sq_errors.map(|e| e.iter().sum::<f64>() / 5.0),
            sq_errors,
        }
    }

    pub fn is_missing(&self) -> bool {
        self.mse.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub rows: Vec<GroundingRow>,
    /// Mean over rows that could be fitted; `None` if none could.
    pub aggregate: Option<f64>,
    pub missing: usize,
}

impl GroundingReport {
    pub fn from_rows(rows: Vec<GroundingRow>) -> Self {
        let scored: Vec<f64> = rows.iter().filter_map(|r| r.mse).collect();
        let aggregate = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
        Self {
            missing: rows.len() - scored.len(),
            rows,
            aggregate,
        }
    }
}

fn check_same_shape(a: &Raster, b: &Raster) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Shape(alloc::format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width,
            a.height,
            a.channels,
            b.width,
            b.height,
            b.channels
        )))
    }
}

/// Mean squared error over all samples.
pub fn mse(a: &Raster, b: &Raster) -> Result<f64> {
    check_same_shape(a, b)?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// Peak signal-to-noise ratio in dB for 8-bit data; identical inputs give
/// `f64::INFINITY`.
pub fn psnr(a: &Raster, b: &Raster) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * math::log10(PIXEL_MAX * PIXEL_MAX / m))
}

/// SSIM of one window from its moments.
pub(crate) fn ssim_from_moments(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    let c1 = (SSIM_K1 * PIXEL_MAX) * (SSIM_K1 * PIXEL_MAX);
    let c2 = (SSIM_K2 * PIXEL_MAX) * (SSIM_K2 * PIXEL_MAX);
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Single-scale SSIM averaged over every 8x8 window (stride 1) and channel.
pub fn ssim(a: &Raster, b: &Raster) -> Result<f64> {
    check_same_shape(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Domain("image smaller than the SSIM window"));
    }
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let (nx, ny) = (a.width - SSIM_WINDOW + 1, a.height - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for ch in 0..a.channels {
        for y0 in 0..ny {
            for x0 in 0..nx {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for y in y0..y0 + SSIM_WINDOW {
                    for x in x0..x0 + SSIM_WINDOW {
                        let va = a.pixel(x, y)[ch] as f64;
                        let vb = b.pixel(x, y)[ch] as f64;
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let var_a = saa / n - ma * ma;
                let var_b = sbb / n - mb * mb;
                let cov = sab / n - ma * mb;
                total += ssim_from_moments(ma, mb, var_a, var_b, cov);
            }
        }
    }
    Ok(total / (nx * ny * a.channels) as f64)
}
