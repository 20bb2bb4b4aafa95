//! Seeded foreground augmentation.
//!
//! Transforms run in a fixed order (color jitter, scale, rotate,
//! perspective, random erase), each with its own probability. Every applied
//! transform is logged with its drawn parameters; [`replay`] re-applies a log
//! and reproduces the augmented raster exactly.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{self, PI};
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColorJitterConfig {
    pub prob: f64,
    /// Brightness factor drawn from `[1 - brightness, 1 + brightness]`.
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

impl Default for ColorJitterConfig {
    fn default() -> Self {
        Self {
            prob: 0.8,
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeConfig {
    pub prob: f64,
    pub range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerspectiveConfig {
    pub prob: f64,
    /// Largest corner displacement as a fraction of the raster size.
    pub max_distortion: f64,
}

impl Default for PerspectiveConfig {
    fn default() -> Self {
        Self {
            prob: 0.3,
            max_distortion: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EraseConfig {
    pub prob: f64,
    /// Erased fraction of the raster area.
    pub area_range: (f64, f64),
    /// Height / width ratio of the erased rectangle.
    pub aspect_range: (f64, f64),
}

impl Default for EraseConfig {
    fn default() -> Self {
        Self {
            prob: 0.25,
            area_range: (0.02, 0.2),
            aspect_range: (0.3, 3.3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub color_jitter: ColorJitterConfig,
    pub scale: RangeConfig,
    /// Rotation range in radians.
    pub rotate: RangeConfig,
    pub perspective: PerspectiveConfig,
    pub erase: EraseConfig,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            color_jitter: ColorJitterConfig::default(),
            scale: RangeConfig {
                prob: 0.5,
                range: (0.8, 1.2),
            },
            rotate: RangeConfig {
                prob: 0.5,
                range: (-PI / 12.0, PI / 12.0),
            },
            perspective: PerspectiveConfig::default(),
            erase: EraseConfig::default(),
        }
    }
}

impl AugmentConfig {
    /// Configuration that never fires.
    pub fn disabled() -> Self {
        let mut c = Self::default();
        c.color_jitter.prob = 0.0;
        c.scale.prob = 0.0;
        c.rotate.prob = 0.0;
        c.perspective.prob = 0.0;
        c.erase.prob = 0.0;
        c
    }
}

/// One applied transform with its drawn parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugStep {
    /// Foreground crop taken from the source image before augmentation.
    Crop { x: usize, y: usize, width: usize, height: usize },
    ColorJitter { brightness: f64, contrast: f64, saturation: f64 },
    Scale { factor: f64 },
    Rotate { radians: f64 },
    /// Where each raster corner (TL, TR, BR, BL) lands, in pixels.
    Perspective { corners: [[f64; 2]; 4] },
    Erase { x: usize, y: usize, width: usize, height: usize },
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn fires(rng: &mut ChaCha8Rng, prob: f64) -> bool {
    rng.gen::<f64>() < prob
}

/// Augments `raster` with transforms drawn from `cfg` and `seed`.
pub fn augment_foreground(raster: &Raster, seed: u64, cfg: &AugmentConfig) -> (Raster, Vec<AugStep>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = Vec::new();
    let (w, h) = (raster.width as f64, raster.height as f64);

    if fires(&mut rng, cfg.color_jitter.prob) {
        let j = &cfg.color_jitter;
        log.push(AugStep::ColorJitter {
            brightness: uniform(&mut rng, (1.0 - j.brightness, 1.0 + j.brightness)),
            contrast: uniform(&mut rng, (1.0 - j.contrast, 1.0 + j.contrast)),
            saturation: uniform(&mut rng, (1.0 - j.saturation, 1.0 + j.saturation)),
        });
    }
    if fires(&mut rng, cfg.scale.prob) {
        log.push(AugStep::Scale {
            factor: uniform(&mut rng, cfg.scale.range),
        });
    }
    if fires(&mut rng, cfg.rotate.prob) {
        log.push(AugStep::Rotate {
            radians: uniform(&mut rng, cfg.rotate.range),
        });
    }
    if fires(&mut rng, cfg.perspective.prob) {
        let m = cfg.perspective.max_distortion;
        let base = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
        let mut corners = base;
        for c in &mut corners {
            c[0] += uniform(&mut rng, (-m * w, m * w));
            c[1] += uniform(&mut rng, (-m * h, m * h));
        }
        log.push(AugStep::Perspective { corners });
    }
    if fires(&mut rng, cfg.erase.prob) {
        let e = &cfg.erase;
        let area = uniform(&mut rng, e.area_range) * w * h;
        let aspect = uniform(&mut rng, e.aspect_range);
        let eh = (math::round(math::sqrt(area * aspect)) as usize).clamp(1, raster.height);
        let ew = (math::round(math::sqrt(area / aspect)) as usize).clamp(1, raster.width);
        let x = rng.gen_range(0..=raster.width - ew);
        let y = rng.gen_range(0..=raster.height - eh);
        log.push(AugStep::Erase {
            x,
            y,
            width: ew,
            height: eh,
        });
    }

    let out = replay(raster, &log);
    (out, log)
}

/// Re-applies logged transforms in order. `Crop` steps are skipped since
/// they describe how the input was produced.
pub fn replay(raster: &Raster, log: &[AugStep]) -> Raster {
    let mut out = raster.clone();
    for step in log {
        out = match *step {
            AugStep::Crop { .. } => out,
            AugStep::ColorJitter {
                brightness,
                contrast,
                saturation,
            } => color_jitter(&out, brightness, contrast, saturation),
            AugStep::Scale { factor } => scale(&out, factor),
            AugStep::Rotate { radians } => rotate(&out, radians),
            AugStep::Perspective { corners } => perspective(&out, &corners),
            AugStep::Erase { x, y, width, height } => erase(&out, x, y, width, height),
        };
    }
    out
}

fn to_u8(v: f64) -> u8 {
    math::round(v.clamp(0.0, 255.0)) as u8
}

/// Brightness, then contrast about the mean, then saturation about luma.
/// A fourth channel is treated as alpha and left alone.
pub fn color_jitter(r: &Raster, brightness: f64, contrast: f64, saturation: f64) -> Raster {
    let color = r.channels.min(3);
    let n = (r.width * r.height * color) as f64;
    let mean = r
        .data
        .chunks_exact(r.channels)
        .flat_map(|p| p[..color].iter())
        .map(|&v| v as f64 * brightness)
        .sum::<f64>()
        / n;
    let mut out = r.clone();
    let mut buf = [0.0f64; 3];
    for px in out.data.chunks_exact_mut(r.channels) {
        for (b, &v) in buf.iter_mut().zip(px[..color].iter()) {
            *b = (v as f64 * brightness - mean) * contrast + mean;
        }
        if color == 3 {
            let luma = 0.299 * buf[0] + 0.587 * buf[1] + 0.114 * buf[2];
            for b in &mut buf {
                *b = luma + (*b - luma) * saturation;
            }
        }
        for (v, &b) in px[..color].iter_mut().zip(buf.iter()) {
            *v = to_u8(b);
        }
    }
    out
}

/// Nearest-neighbour inverse warp; `source` maps an output pixel center to a
/// source position, and samples falling outside become zero.
fn warp(r: &Raster, source: impl Fn(f64, f64) -> Option<(f64, f64)>) -> Raster {
    let mut out = Raster::filled(r.width, r.height, r.channels, 0);
    for y in 0..r.height {
        for x in 0..r.width {
            let Some((sx, sy)) = source(x as f64 + 0.5, y as f64 + 0.5) else {
                continue;
            };
            let (fx, fy) = (math::floor(sx), math::floor(sy));
            if fx < 0.0 || fy < 0.0 || fx >= r.width as f64 || fy >= r.height as f64 {
                continue;
            }
            out.pixel_mut(x, y).copy_from_slice(r.pixel(fx as usize, fy as usize));
        }
    }
    out
}

/// Zooms about the raster center by `factor`.
pub fn scale(r: &Raster, factor: f64) -> Raster {
    let (cx, cy) = (r.width as f64 / 2.0, r.height as f64 / 2.0);
    warp(r, |x, y| Some((cx + (x - cx) / factor, cy + (y - cy) / factor)))
}

/// Rotates content about the raster center: the point at offset `d` from the
/// center moves to `R(radians) d` (x right, y down).
pub fn rotate(r: &Raster, radians: f64) -> Raster {
    let (cx, cy) = (r.width as f64 / 2.0, r.height as f64 / 2.0);
    let (s, c) = (math::sin(radians), math::cos(radians));
    warp(r, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        Some((cx + c * dx + s * dy, cy - s * dx + c * dy))
    })
}

/// Warps the raster so its corners land on `corners` (TL, TR, BR, BL).
pub fn perspective(r: &Raster, corners: &[[f64; 2]; 4]) -> Raster {
    let (w, h) = (r.width as f64, r.height as f64);
    let base = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
    // homography from output space back to source space
    let Some(hm) = homography(corners, &base) else {
        return r.clone();
    };
    warp(r, |x, y| {
        let d = hm[6] * x + hm[7] * y + 1.0;
        if d.abs() < 1e-12 {
            return None;
        }
        Some(((hm[0] * x + hm[1] * y + hm[2]) / d, (hm[3] * x + hm[4] * y + hm[5]) / d))
    })
}

/// Zeroes a rectangle.
pub fn erase(r: &Raster, x: usize, y: usize, width: usize, height: usize) -> Raster {
    let mut out = r.clone();
    for yy in y..(y + height).min(r.height) {
        for xx in x..(x + width).min(r.width) {
            out.pixel_mut(xx, yy).fill(0);
        }
    }
    out
}

/// 3x3 homography (with `h33 = 1`) taking `from[i]` to `to[i]`.
#[allow(clippy::needless_range_loop)]
fn homography(from: &[[f64; 2]; 4], to: &[[f64; 2]; 4]) -> Option<[f64; 8]> {
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let ([x, y], [u, v]) = (from[i], to[i]);
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    // Gauss-Jordan with partial pivoting on the augmented 8x9 system.
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        let inv = 1.0 / a[col][col];
        for k in col..9 {
            a[col][k] *= inv;
        }
        for row in 0..8 {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for k in col..9 {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    let mut out = [0.0; 8];
    for (o, row) in out.iter_mut().zip(a.iter()) {
        *o = row[8];
    }
    Some(out)
}
