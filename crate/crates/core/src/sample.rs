//! Disentangle-then-reconstruct sample generation.
//!
//! An existing image is treated as the post-edit result: its foreground blob
//! is the target, a perturbed copy plays the pre-edit source, and both
//! regions are cut out of the background.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_foreground, AugStep, AugmentConfig};
use crate::blob::{
    ellipse_to_gaussian, gaussian_to_ellipse, validate_gaussian, BlobEllipse, BlobGaussian, ConfidenceLevel,
    DEFAULT_MIN_EIG,
};
use crate::curation::{curate_record, CurationRules, RejectReason};
use crate::field::{blob_mask, CoordGrid, FieldKind, FieldMap};
use crate::math::{self, PI, TAU};
use crate::raster::{Mask, Raster};
use crate::{Error, Result};

/// Resampling budget of [`sample_pre_edit_blob`].
pub const MAX_PERTURB_ATTEMPTS: usize = 32;

/// Distribution of the synthetic pre-edit blob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    /// Radius of the uniform disc the center shift is drawn from.
    pub max_center_shift: f64,
    /// Independent multiplicative factors for each semi-axis.
    pub scale_range: (f64, f64),
    /// Rotation drawn uniformly from `[-max_rotation, max_rotation]`.
    pub max_rotation: f64,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            max_center_shift: 0.25,
            scale_range: (0.7, 1.3),
            max_rotation: PI / 6.0,
            seed: 0,
        }
    }
}

impl PerturbConfig {
    /// No perturbation at all.
    pub fn identity(seed: u64) -> Self {
        Self {
            max_center_shift: 0.0,
            scale_range: (1.0, 1.0),
            max_rotation: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Domain("scale range must satisfy 0 < lo <= hi"));
        }
        if !(self.max_center_shift >= 0.0 && self.max_center_shift.is_finite()) {
            return Err(Error::Domain("max_center_shift must be non-negative"));
        }
        if !(self.max_rotation >= 0.0 && self.max_rotation.is_finite()) {
            return Err(Error::Domain("max_rotation must be non-negative"));
        }
        Ok(())
    }
}

/// One draw of the perturbation distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Perturbation {
    dx: f64,
    dy: f64,
    s_a: f64,
    s_b: f64,
    dtheta: f64,
}

impl Perturbation {
    fn draw(rng: &mut ChaCha8Rng, cfg: &PerturbConfig) -> Self {
        // sqrt makes the radius uniform over the disc area
        let r = cfg.max_center_shift * math::sqrt(rng.gen::<f64>());
        let phi = TAU * rng.gen::<f64>();
        let (lo, hi) = cfg.scale_range;
        let s_a = lo + (hi - lo) * rng.gen::<f64>();
        let s_b = lo + (hi - lo) * rng.gen::<f64>();
        let dtheta = cfg.max_rotation * (2.0 * rng.gen::<f64>() - 1.0);
        Self {
            dx: r * math::cos(phi),
            dy: r * math::sin(phi),
            s_a,
            s_b,
            dtheta,
        }
    }

    fn is_identity(&self) -> bool {
        self.dx == 0.0 && self.dy == 0.0 && self.s_a == 1.0 && self.s_b == 1.0 && self.dtheta == 0.0
    }
}

/// Draws a pre-edit blob around `g`.
///
/// Draws are rejected when the covariance fails [`validate_gaussian`] or the
/// center leaves the unit square; after [`MAX_PERTURB_ATTEMPTS`] rejections
/// this is a degeneracy error.
pub fn sample_pre_edit_blob(g: &BlobGaussian, cfg: &PerturbConfig) -> Result<BlobGaussian> {
    cfg.validate()?;
    let p = ConfidenceLevel::default();
    let base = gaussian_to_ellipse(g, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..MAX_PERTURB_ATTEMPTS {
        let d = Perturbation::draw(&mut rng, cfg);
        if d.is_identity() {
            return Ok(*g);
        }
        let (cx, cy) = (base.cx + d.dx, base.cy + d.dy);
        if !((0.0..=1.0).contains(&cx) && (0.0..=1.0).contains(&cy)) {
            continue;
        }
        let e = BlobEllipse::new(cx, cy, base.a * d.s_a, base.b * d.s_b, base.theta + d.dtheta)?;
        let candidate = ellipse_to_gaussian(&e, p);
        if validate_gaussian(&candidate, DEFAULT_MIN_EIG).is_ok() {
            return Ok(candidate);
        }
    }
    Err(Error::Degenerate("no valid pre-edit blob within the resampling budget"))
}

/// Union of the source and target confidence-ellipse masks.
pub fn dual_mask(source: &BlobGaussian, target: &BlobGaussian, grid: &CoordGrid, p: ConfidenceLevel) -> Result<FieldMap> {
    let mut m = blob_mask(source, grid, p)?;
    let t = blob_mask(target, grid, p)?;
    for (a, b) in m.values.iter_mut().zip(&t.values) {
        *a = a.max(*b);
    }
    Ok(m)
}

/// Everything needed to generate one training sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub rules: CurationRules,
    pub perturb: PerturbConfig,
    pub augment: AugmentConfig,
    pub augment_seed: u64,
    pub confidence: ConfidenceLevel,
    pub caption: String,
}

/// Why no sample was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleError {
    /// The (image, mask) pair failed curation.
    Rejected(RejectReason),
    /// Inputs or configuration are unusable.
    Invalid(Error),
}

impl fmt::Display for SampleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleError::Rejected(r) => f.write_str(r.as_str()),
            SampleError::Invalid(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for SampleError {
    fn from(e: Error) -> Self {
        SampleError::Invalid(e)
    }
}

impl From<RejectReason> for SampleError {
    fn from(r: RejectReason) -> Self {
        SampleError::Rejected(r)
    }
}

/// One disentangle-then-reconstruct training instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    /// Masked foreground crop after augmentation.
    pub foreground: Raster,
    /// Input image with the dual-mask region zeroed.
    pub background: Raster,
    pub source_blob: BlobGaussian,
    pub target_blob: BlobGaussian,
    pub target_ellipse: BlobEllipse,
    pub dual_mask: FieldMap,
    /// Target blob mask (M1).
    pub fg_mask: FieldMap,
    /// Crop step followed by the applied augmentations.
    pub augmentation_log: Vec<AugStep>,
    pub caption: String,
}

impl TrainingSample {
    /// Checks mask containment and that the background is zero on the dual
    /// mask and untouched elsewhere.
    pub fn check_invariants(&self, image: &Raster) -> bool {
        let contained = self
            .fg_mask
            .values
            .iter()
            .zip(&self.dual_mask.values)
            .all(|(&m1, &d)| m1 < 0.5 || d >= 0.5);
        let background = self
            .background
            .data
            .chunks_exact(self.background.channels)
            .zip(image.data.chunks_exact(image.channels))
            .zip(&self.dual_mask.values)
            .all(|((bg, src), &d)| if d >= 0.5 { bg.iter().all(|&v| v == 0) } else { bg == src });
        contained && background && self.dual_mask.kind == FieldKind::Mask
    }
}

/// Builds a training sample from an image and its foreground mask.
pub fn build_training_sample(image: &Raster, fg_mask: &Mask, cfg: &SampleConfig) -> Result<TrainingSample, SampleError> {
    cfg.rules.validate()?;
    cfg.perturb.validate()?;
    let (w, h) = (image.width, image.height);
    let (w32, h32) = (
        u32::try_from(w).map_err(|_| Error::Domain("image too wide"))?,
        u32::try_from(h).map_err(|_| Error::Domain("image too tall"))?,
    );
    let p = cfg.confidence;
    let curated = curate_record(w32, h32, fg_mask, &cfg.rules, p)?;
    let target = curated.gaussian;
    let source = sample_pre_edit_blob(&target, &cfg.perturb)?;

    let grid = CoordGrid::new(w, h)?;
    let m1 = blob_mask(&target, &grid, p)?;
    let dual = dual_mask(&source, &target, &grid, p)?;

    let bbox = fg_mask.bounding_box().ok_or(SampleError::Rejected(RejectReason::Empty))?;
    let mut crop = image.crop(bbox.x, bbox.y, bbox.width, bbox.height)?;
    for y in 0..bbox.height {
        for x in 0..bbox.width {
            if !fg_mask.get(bbox.x + x, bbox.y + y) {
                crop.pixel_mut(x, y).fill(0);
            }
        }
    }
    let (foreground, applied) = augment_foreground(&crop, cfg.augment_seed, &cfg.augment);
    let mut log = Vec::with_capacity(applied.len() + 1);
    log.push(AugStep::Crop {
        x: bbox.x,
        y: bbox.y,
        width: bbox.width,
        height: bbox.height,
    });
    log.extend(applied);

    let mut background = image.clone();
    for (px, &d) in background.data.chunks_exact_mut(image.channels).zip(&dual.values) {
        if d >= 0.5 {
            px.fill(0);
        }
    }

    Ok(TrainingSample {
        foreground,
        background,
        source_blob: source,
        target_blob: target,
        target_ellipse: curated.ellipse,
        dual_mask: dual,
        fg_mask: m1,
        augmentation_log: log,
        caption: cfg.caption.clone(),
    })
}
