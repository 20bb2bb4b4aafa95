//! 8-bit rasters and binary masks.

use alloc::vec;
use alloc::vec::Vec;

use crate::blob::BlobEllipse;
use crate::field::{CoordGrid, FieldKind, FieldMap};
use crate::{Error, Result};

/// Interleaved 8-bit image, row-major, `channels` samples per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Domain("raster dimensions must be positive"));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(alloc::format!(
                "raster {width}x{height}x{channels} needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Copy of the `w x h` window at `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Raster> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::Domain("crop window outside raster"));
        }
        let mut data = Vec::with_capacity(w * h * self.channels);
        for row in y..y + h {
            let start = (row * self.width + x) * self.channels;
            data.extend_from_slice(&self.data[start..start + w * self.channels]);
        }
        Ok(Raster {
            width: w,
            height: h,
            channels: self.channels,
            data,
        })
    }
}

/// Binary mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

/// Inclusive-exclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain("mask dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::Shape(alloc::format!(
                "mask {width}x{height} needs {} cells, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    /// Pixels whose grid coordinate lies inside `e`.
    ///
    /// Pixel `(w, h)` sits at normalized `((w + 1) / W, (h + 1) / H)`, the
    /// same convention as [`CoordGrid`].
    pub fn from_ellipse(e: &BlobEllipse, width: usize, height: usize) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for h in 0..height {
            for w in 0..width {
                let (x, y) = CoordGrid::coord_of(w, h, width, height);
                data.push(e.contains(x, y));
            }
        }
        Self { width, height, data }
    }

    /// Nonzero samples of the first channel.
    pub fn from_raster(r: &Raster) -> Self {
        Self {
            width: r.width,
            height: r.height,
            data: r.data.chunks_exact(r.channels).map(|p| p[0] != 0).collect(),
        }
    }

    /// Mask from a mask-kind field (`value >= 0.5`).
    pub fn from_field(f: &FieldMap) -> Self {
        Self {
            width: f.width,
            height: f.height,
            data: f.values.iter().map(|&v| v >= 0.5).collect(),
        }
    }

    pub fn to_field(&self) -> FieldMap {
        FieldMap {
            width: self.width,
            height: self.height,
            kind: FieldKind::Mask,
            values: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// 0/255 single-channel raster.
    pub fn to_raster(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn area_ratio(&self) -> f64 {
        self.count() as f64 / (self.width * self.height) as f64
    }

    /// Bounding box of set pixels, `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<PixelRect> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for (i, _) in self.data.iter().enumerate().filter(|(_, &b)| b) {
            let (x, y) = (i % self.width, i / self.width);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        (x0 != usize::MAX).then(|| PixelRect {
            x: x0,
            y: y0,
            width: x1 - x0 + 1,
            height: y1 - y0 + 1,
        })
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.check_shape(other)?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        })
    }

    /// Whether every set pixel of `self` is set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    fn check_shape(&self, other: &Mask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Shape(alloc::format!(
                "mask {}x{} vs {}x{}",
                self.width,
                self.height,
                other.width,
                other.height
            )));
        }
        Ok(())
    }
}
