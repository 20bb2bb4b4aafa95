//! Deterministic test data: the curation corpus, random scenes and
//! synthetic images.

use std::path::Path;

use blobforge_core::curation::{CurationRules, RejectReason};
use blobforge_core::raster::{Mask, Raster};
use blobforge_core::{BlobEllipse, BlobEntry, BlobScene, ConfidenceLevel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formats::{mask_to_png, raster_to_png, FormatError};

/// One labelled (image size, mask) pair.
#[derive(Debug, Clone)]
pub struct CurationCase {
    pub name: &'static str,
    pub width: u32,
    pub height: u32,
    pub mask: Mask,
    pub rules: CurationRules,
    /// `None` means accepted.
    pub expected: Option<RejectReason>,
}

fn case(name: &'static str, width: u32, height: u32, mask: Mask, expected: Option<RejectReason>) -> CurationCase {
    CurationCase {
        name,
        width,
        height,
        mask,
        rules: CurationRules::default(),
        expected,
    }
}

fn disc(w: usize, h: usize) -> Mask {
    let e = BlobEllipse::new(0.5, 0.5, 0.2, 0.2, 0.0).expect("valid disc");
    Mask::from_ellipse(&e, w, h)
}

/// Exactly `n` pixels as a centered, nearly square block.
pub fn area_block(w: usize, h: usize, n: usize) -> Mask {
    let mut m = Mask::empty(w, h);
    let side = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(side);
    let (x0, y0) = ((w - side) / 2, (h - rows) / 2);
    for i in 0..n {
        m.set(x0 + i % side, y0 + i / side, true);
    }
    m
}

fn band(w: usize, h: usize, thickness: usize, vertical: bool) -> Mask {
    let mut m = Mask::empty(w, h);
    for i in 1..(if vertical { h } else { w }) - 1 {
        for t in 0..thickness {
            let mid = (if vertical { w } else { h }) / 2 - thickness / 2 + t;
            if vertical {
                m.set(mid, i, true);
            } else {
                m.set(i, mid, true);
            }
        }
    }
    m
}

fn with_pixel(mut m: Mask, x: usize, y: usize) -> Mask {
    m.set(x, y, true);
    m
}

/// Thirty (image, mask) pairs covering every curation boundary.
pub fn curation_corpus() -> Vec<CurationCase> {
    use RejectReason::*;
    let n = 500usize;
    let total = n * n;
    let area = |ratio: f64| area_block(n, n, (ratio * total as f64).round() as usize);
    let mut cases = vec![
        case("short_479_portrait", 479, 1000, disc(479, 1000), Some(ShortSide)),
        case("short_480_portrait", 480, 1000, disc(480, 1000), Some(ShortSide)),
        case("short_481_portrait", 481, 1000, disc(481, 1000), None),
        case("short_479_landscape", 1000, 479, disc(1000, 479), Some(ShortSide)),
        case("short_480_landscape", 1000, 480, disc(1000, 480), Some(ShortSide)),
        case("short_481_landscape", 1000, 481, disc(1000, 481), None),
        case("short_480_wide", 2000, 480, disc(2000, 480), Some(ShortSide)),
        case("square_481", 481, 481, disc(481, 481), None),
        case("area_0_009", 500, 500, area(0.009), Some(Area)),
        case("area_0_0099", 500, 500, area(0.0099), Some(Area)),
        case("area_0_01", 500, 500, area(0.01), None),
        case("area_0_5", 500, 500, area(0.5), None),
        case("area_0_9", 500, 500, area(0.9), None),
        case("area_0_9004", 500, 500, area(0.9004), Some(Area)),
        case("area_0_91", 500, 500, area(0.91), Some(Area)),
        case("area_full", 500, 500, Mask::new(n, n, vec![true; total]).expect("shape"), Some(Area)),
        case("empty", 500, 500, Mask::empty(n, n), Some(Empty)),
        case("touch_left", 500, 500, with_pixel(disc(n, n), 0, 250), Some(Boundary)),
        case("touch_right", 500, 500, with_pixel(disc(n, n), n - 1, 250), Some(Boundary)),
        case("touch_top", 500, 500, with_pixel(disc(n, n), 250, 0), Some(Boundary)),
        case("touch_bottom", 500, 500, with_pixel(disc(n, n), 250, n - 1), Some(Boundary)),
        case("reach_column_1", 500, 500, with_pixel(disc(n, n), 1, 250), None),
        case("band_6_rows", 500, 500, band(n, n, 6, false), Some(IllConditioned)),
        case("band_8_rows", 500, 500, band(n, n, 8, false), None),
        case("band_6_cols", 500, 500, band(n, n, 6, true), Some(IllConditioned)),
        case("mask_shape_mismatch", 500, 500, disc(400, 500), Some(MaskShape)),
        case(
            "rotated_ellipse",
            500,
            500,
            Mask::from_ellipse(&BlobEllipse::new(0.45, 0.55, 0.3, 0.12, 0.7).expect("valid"), n, n),
            None,
        ),
        case("two_blobs", 500, 500, {
            let a = Mask::from_ellipse(&BlobEllipse::new(0.3, 0.3, 0.1, 0.1, 0.0).expect("valid"), n, n);
            let b = Mask::from_ellipse(&BlobEllipse::new(0.7, 0.7, 0.1, 0.1, 0.0).expect("valid"), n, n);
            a.union(&b).expect("same shape")
        }, None),
    ];
    let mut tiny = Mask::empty(n, n);
    for x in 200..203 {
        tiny.set(x, 250 + x % 2, true);
    }
    cases.push(CurationCase {
        rules: CurationRules {
            area_ratio_range: (1e-6, 0.9),
            ..Default::default()
        },
        ..case("three_pixels", 500, 500, tiny, Some(FitFailed))
    });
    cases.push(case(
        "landscape_disc",
        640,
        481,
        disc(640, 481),
        None,
    ));
    cases
}

/// Writes the cases that use default rules and a matching image size as
/// `images/`, `masks/` and `captions/`. Returns the written names.
pub fn write_corpus_dir(dir: &Path, cases: &[CurationCase]) -> Result<Vec<&'static str>, FormatError> {
    for sub in ["images", "masks", "captions"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    let mut names = Vec::new();
    for c in cases.iter().filter(|c| c.rules == CurationRules::default()) {
        let image = Raster::filled(c.width as usize, c.height as usize, 3, 127);
        std::fs::write(dir.join("images").join(format!("{}.png", c.name)), raster_to_png(&image)?)?;
        std::fs::write(dir.join("masks").join(format!("{}.png", c.name)), mask_to_png(&c.mask)?)?;
        std::fs::write(dir.join("captions").join(format!("{}.txt", c.name)), format!("a {}\n", c.name))?;
        names.push(c.name);
    }
    Ok(names)
}

/// A random scene with `m` blobs kept well inside the canvas.
pub fn random_scene(seed: u64, width: usize, height: usize, m: usize, feature_dim: usize) -> BlobScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = ConfidenceLevel::default();
    let blobs = (0..m)
        .map(|i| {
            let a = rng.gen_range(0.05..0.35);
            let b = rng.gen_range(0.03..a);
            let e = BlobEllipse::new(
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.2..0.8),
                a,
                b,
                rng.gen_range(0.0..std::f64::consts::PI),
            )
            .expect("valid ellipse");
            let feature = (0..feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            BlobEntry::new(format!("b{i}"), format!("blob {i}"), e, feature, p).expect("valid entry")
        })
        .collect();
    BlobScene::new(width, height, p, blobs).expect("valid scene")
}

/// Smooth RGB gradient with seeded noise.
pub fn textured_image(width: usize, height: usize, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = Raster::filled(width, height, 3, 0);
    for y in 0..height {
        for x in 0..width {
            let base = [
                (255 * x / width.max(1)) as i32,
                (255 * y / height.max(1)) as i32,
                (255 * (x + y) / (width + height).max(1)) as i32,
            ];
            let px = r.pixel_mut(x, y);
            for (c, b) in base.iter().enumerate() {
                px[c] = (b + rng.gen_range(-8..=8)).clamp(0, 255) as u8;
            }
        }
    }
    r
}

/// Mask of an ellipse given in normalized coordinates.
pub fn ellipse_mask(e: &BlobEllipse, width: usize, height: usize) -> Mask {
    Mask::from_ellipse(e, width, height)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_blocks_hit_exact_ratios() {
        for (ratio, n) in [(0.01, 2500), (0.9, 225000), (0.0099, 2475)] {
            let m = area_block(500, 500, n);
            assert_eq!(m.count(), n);
            assert_eq!(m.area_ratio(), ratio);
        }
    }

    #[test]
    fn corpus_has_thirty_unique_cases() {
        let c = curation_corpus();
        assert_eq!(c.len(), 30);
        let mut names: Vec<_> = c.iter().map(|c| c.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 30);
    }

    #[test]
    fn corpus_verdicts() {
        use blobforge_core::curation::curate_record;
        for c in curation_corpus() {
            let got = curate_record(c.width, c.height, &c.mask, &c.rules, ConfidenceLevel::default()).err();
            assert_eq!(got, c.expected, "{}", c.name);
        }
    }
}
