//! Dataset curation: image and mask filters, moment-based ellipse fitting
//! and the record pipeline that turns an (image, mask) pair into a blob.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::blob::{
    ellipse_to_gaussian, symmetric_eigen, validate_gaussian, BlobEllipse, BlobGaussian, ConfidenceLevel,
    GaussianRejection, DEFAULT_MIN_EIG,
};
use crate::math;
use crate::raster::Mask;

/// Minimum number of set pixels for a non-degenerate fit.
pub const MIN_FIT_PIXELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationRules {
    /// Images must have a shorter side strictly greater than this.
    pub min_short_side: u32,
    /// Closed interval of accepted mask-area / image-area ratios.
    pub area_ratio_range: (f64, f64),
    /// Set pixels closer than this to any edge count as touching it.
    pub boundary_margin: u32,
    /// Minimum covariance eigenvalue of the derived Gaussian.
    pub min_cov_eig: f64,
}

impl Default for CurationRules {
    fn default() -> Self {
        Self {
            min_short_side: 480,
            area_ratio_range: (0.01, 0.9),
            boundary_margin: 1,
            min_cov_eig: DEFAULT_MIN_EIG,
        }
    }
}

impl CurationRules {
    pub fn validate(&self) -> crate::Result<()> {
        let (lo, hi) = self.area_ratio_range;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(crate::Error::Domain("area ratio range must satisfy 0 < lo < hi < 1"));
        }
        if self.min_short_side < 1 {
            return Err(crate::Error::Domain("min_short_side must be at least 1"));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
        if !(self.min_cov_eig >= 0.0) {
            return Err(crate::Error::Domain("min_cov_eig must be non-negative"));
        }
        Ok(())
    }
}

/// Why a sample was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    #[serde(rename = "short_side")]
    ShortSide,
    #[serde(rename = "mask_shape")]
    MaskShape,
    #[serde(rename = "empty")]
    Empty,
    #[serde(rename = "area")]
    Area,
    #[serde(rename = "boundary")]
    Boundary,
    #[serde(rename = "fit_failed")]
    FitFailed,
    #[serde(rename = "ill-conditioned")]
    IllConditioned,
    #[serde(rename = "asymmetric")]
    Asymmetric,
    #[serde(rename = "non-finite")]
    NonFinite,
}

impl RejectReason {
    pub const ALL: [RejectReason; 9] = [
        RejectReason::ShortSide,
        RejectReason::MaskShape,
        RejectReason::Empty,
        RejectReason::Area,
        RejectReason::Boundary,
        RejectReason::FitFailed,
        RejectReason::IllConditioned,
        RejectReason::Asymmetric,
        RejectReason::NonFinite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::ShortSide => "short_side",
            RejectReason::MaskShape => "mask_shape",
            RejectReason::Empty => "empty",
            RejectReason::Area => "area",
            RejectReason::Boundary => "boundary",
            RejectReason::FitFailed => "fit_failed",
            RejectReason::IllConditioned => "ill-conditioned",
            RejectReason::Asymmetric => "asymmetric",
            RejectReason::NonFinite => "non-finite",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<GaussianRejection> for RejectReason {
    fn from(r: GaussianRejection) -> Self {
        match r {
            GaussianRejection::NonFinite => RejectReason::NonFinite,
            GaussianRejection::Asymmetric => RejectReason::Asymmetric,
            GaussianRejection::IllConditioned => RejectReason::IllConditioned,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum FitError {
    #[error("mask has {0} set pixels, need at least 5")]
    TooFewPixels(usize),
    #[error("mask pixels are collinear")]
    Collinear,
}

impl From<FitError> for RejectReason {
    fn from(e: FitError) -> Self {
        match e {
            FitError::TooFewPixels(_) => RejectReason::FitFailed,
            // a line has a zero-variance direction: the degenerate-covariance rule
            FitError::Collinear => RejectReason::IllConditioned,
        }
    }
}

pub fn filter_image(width: u32, height: u32, rules: &CurationRules) -> Result<(), RejectReason> {
    if width.min(height) > rules.min_short_side {
        Ok(())
    } else {
        Err(RejectReason::ShortSide)
    }
}

fn check_area(mask: &Mask, rules: &CurationRules) -> Result<(), RejectReason> {
    let count = mask.count();
    if count == 0 {
        return Err(RejectReason::Empty);
    }
    let ratio = count as f64 / (mask.width * mask.height) as f64;
    let (lo, hi) = rules.area_ratio_range;
    if (lo..=hi).contains(&ratio) {
        Ok(())
    } else {
        Err(RejectReason::Area)
    }
}

fn check_boundary(mask: &Mask, rules: &CurationRules) -> Result<(), RejectReason> {
    let m = rules.boundary_margin as usize;
    if m == 0 {
        return Ok(());
    }
    let (w, h) = (mask.width, mask.height);
    let touches = mask
        .data
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .any(|(i, _)| {
            let (x, y) = (i % w, i / w);
            x < m || y < m || x + m >= w || y + m >= h
        });
    if touches {
        Err(RejectReason::Boundary)
    } else {
        Ok(())
    }
}

/// Area-ratio and boundary rules; an empty mask is rejected as `empty`.
pub fn filter_mask(mask: &Mask, rules: &CurationRules) -> Result<(), RejectReason> {
    check_area(mask, rules)?;
    check_boundary(mask, rules)
}

/// Second-moment fit of the region covered by `mask`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentFit {
    pub ellipse: BlobEllipse,
    /// Normalized-coordinate covariance of the region, `(xx, xy, yy)`.
    pub covariance: (f64, f64, f64),
    pub pixels: usize,
}

/// Fits the equal-area moment ellipse to the set pixels of `mask`.
///
/// Each pixel is treated as a filled cell centered on its grid coordinate,
/// so a cell contributes `1 / (12 W^2)` (resp. `H`) of intra-cell variance.
/// A filled ellipse with semi-axes `A >= B` has principal second moments
/// `A^2 / 4` and `B^2 / 4`, which gives the semi-axes `2 sqrt(lambda)`.
pub fn fit_moments(mask: &Mask) -> Result<MomentFit, FitError> {
    let (w, h) = (mask.width as f64, mask.height as f64);
    let n = mask.count();
    if n < MIN_FIT_PIXELS {
        return Err(FitError::TooFewPixels(n));
    }
    let points = || {
        mask.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (((i % mask.width) + 1) as f64 / w, ((i / mask.width) + 1) as f64 / h))
    };
    let inv_n = 1.0 / n as f64;
    let (sx, sy) = points().fold((0.0, 0.0), |(ax, ay), (x, y)| (ax + x, ay + y));
    let (mx, my) = (sx * inv_n, sy * inv_n);
    let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
    for (x, y) in points() {
        let (dx, dy) = (x - mx, y - my);
        xx += dx * dx;
        xy += dx * dy;
        yy += dy * dy;
    }
    xx *= inv_n;
    xy *= inv_n;
    yy *= inv_n;
    let trace = xx + yy;
    if xx * yy - xy * xy <= 1e-10 * trace * trace {
        return Err(FitError::Collinear);
    }
    xx += 1.0 / (12.0 * w * w);
    yy += 1.0 / (12.0 * h * h);
    let eig = symmetric_eigen(xx, xy, yy);
    let ellipse = BlobEllipse {
        cx: mx,
        cy: my,
        a: 2.0 * math::sqrt(eig.major),
        b: 2.0 * math::sqrt(eig.minor),
        theta: eig.angle,
    };
    Ok(MomentFit {
        ellipse,
        covariance: (xx, xy, yy),
        pixels: n,
    })
}

/// Canonical moment ellipse of `mask` in normalized coordinates.
pub fn fit_ellipse_to_mask(mask: &Mask) -> Result<BlobEllipse, FitError> {
    fit_moments(mask).map(|f| f.ellipse)
}

/// Individual curation rules, for order-independence checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    ShortSide,
    Area,
    Boundary,
    Covariance,
}

impl Rule {
    pub const PIPELINE_ORDER: [Rule; 4] = [Rule::ShortSide, Rule::Area, Rule::Boundary, Rule::Covariance];
}

/// One passed rule, recorded as provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleCheck {
    pub rule: Rule,
    /// The measured quantity: short side, area ratio, boundary margin or
    /// minimum covariance eigenvalue.
    pub value: f64,
}

/// Blob extracted from an accepted (image, mask) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobRecord {
    pub image_ref: String,
    pub mask_ref: String,
    pub ellipse: BlobEllipse,
    pub gaussian: BlobGaussian,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    pub confidence: ConfidenceLevel,
    pub provenance: Vec<RuleCheck>,
}

impl BlobRecord {
    /// Checks the record's internal consistency.
    pub fn check(&self, rules: &CurationRules) -> bool {
        let derived = ellipse_to_gaussian(&self.ellipse, self.confidence);
        derived == self.gaussian && validate_gaussian(&self.gaussian, rules.min_cov_eig).is_ok()
    }
}

/// Geometry produced by a successful curation.
#[derive(Debug, Clone, PartialEq)]
pub struct Curated {
    pub ellipse: BlobEllipse,
    pub gaussian: BlobGaussian,
    pub provenance: Vec<RuleCheck>,
}

impl Curated {
    pub fn into_record(
        self,
        image_ref: impl Into<String>,
        mask_ref: impl Into<String>,
        caption: Option<String>,
        p: ConfidenceLevel,
    ) -> BlobRecord {
        BlobRecord {
            image_ref: image_ref.into(),
            mask_ref: mask_ref.into(),
            ellipse: self.ellipse,
            gaussian: self.gaussian,
            caption,
            confidence: p,
            provenance: self.provenance,
        }
    }
}

/// Runs the rules in `order`, short-circuiting on the first failure.
///
/// The covariance rule fits the mask on demand, so it may appear anywhere.
pub fn curate_in_order(
    width: u32,
    height: u32,
    mask: &Mask,
    rules: &CurationRules,
    p: ConfidenceLevel,
    order: &[Rule],
) -> Result<Curated, RejectReason> {
    if mask.width != width as usize || mask.height != height as usize {
        return Err(RejectReason::MaskShape);
    }
    let mut provenance = Vec::with_capacity(order.len());
    let mut geometry = None;
    for &rule in order {
        let value = match rule {
            Rule::ShortSide => {
                filter_image(width, height, rules)?;
                width.min(height) as f64
            }
            Rule::Area => {
                check_area(mask, rules)?;
                mask.area_ratio()
            }
            Rule::Boundary => {
                check_boundary(mask, rules)?;
                rules.boundary_margin as f64
            }
            Rule::Covariance => {
                let ellipse = fit_ellipse_to_mask(mask)?;
                let gaussian = ellipse_to_gaussian(&ellipse, p);
                validate_gaussian(&gaussian, rules.min_cov_eig)?;
                let min_eig = gaussian.eigen().minor;
                geometry = Some((ellipse, gaussian));
                min_eig
            }
        };
        provenance.push(RuleCheck { rule, value });
    }
    let (ellipse, gaussian) = match geometry {
        Some(g) => g,
        None => {
            let ellipse = fit_ellipse_to_mask(mask)?;
            (ellipse, ellipse_to_gaussian(&ellipse, p))
        }
    };
    Ok(Curated {
        ellipse,
        gaussian,
        provenance,
    })
}

/// Full pipeline: image filter, mask filters, fit, Gaussian derivation and
/// covariance validation.
pub fn curate_record(
    width: u32,
    height: u32,
    mask: &Mask,
    rules: &CurationRules,
    p: ConfidenceLevel,
) -> Result<Curated, RejectReason> {
    curate_in_order(width, height, mask, rules, p, &Rule::PIPELINE_ORDER)
}
