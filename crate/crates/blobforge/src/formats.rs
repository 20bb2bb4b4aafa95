//! On-disk formats: raw float fields, PNG previews and raster/mask decoding.

use std::io::Cursor;
use std::path::Path;

use blobforge_core::field::{FieldKind, FieldMap};
use blobforge_core::raster::{Mask, Raster};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

/// First header line of a raw field file.
pub const RAW_MAGIC: &str = "BLOBF1";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("not a raw field file")]
    BadMagic,
    #[error("malformed header: {0}")]
    Header(String),
    #[error("expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("field contains non-finite values")]
    NonFinite,
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("unsupported channel count {0}")]
    Channels(usize),
    #[error(transparent)]
    Core(#[from] blobforge_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `BLOBF1\n{W} {H} {kind}\n` followed by row-major little-endian `f32`s.
pub fn encode_raw_field(f: &FieldMap) -> Vec<u8> {
    let header = format!("{RAW_MAGIC}\n{} {} {}\n", f.width, f.height, f.kind);
    let mut out = Vec::with_capacity(header.len() + 4 * f.values.len());
    out.extend_from_slice(header.as_bytes());
    for &v in &f.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn take_line<'a>(bytes: &'a [u8], at: &mut usize) -> Result<&'a str, FormatError> {
    let rest = &bytes[*at..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| FormatError::Header("missing newline".into()))?;
    *at += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| FormatError::Header("header is not UTF-8".into()))
}

pub fn decode_raw_field(bytes: &[u8]) -> Result<FieldMap, FormatError> {
    let mut at = 0;
    if take_line(bytes, &mut at).map_err(|_| FormatError::BadMagic)? != RAW_MAGIC {
        return Err(FormatError::BadMagic);
    }
    let line = take_line(bytes, &mut at)?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    let [w, h, kind] = parts[..] else {
        return Err(FormatError::Header(format!("expected `W H kind`, got {line:?}")));
    };
    let width: usize = w.parse().map_err(|_| FormatError::Header(format!("bad width {w:?}")))?;
    let height: usize = h.parse().map_err(|_| FormatError::Header(format!("bad height {h:?}")))?;
    let kind: FieldKind = kind.parse()?;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FormatError::Header("dimensions overflow".into()))?;
    let payload = &bytes[at..];
    if payload.len() != expected {
        return Err(FormatError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite);
    }
    Ok(FieldMap {
        width,
        height,
        kind,
        values,
    })
}

pub fn write_raw_field(path: &Path, f: &FieldMap) -> Result<(), FormatError> {
    std::fs::write(path, encode_raw_field(f))?;
    Ok(())
}

pub fn read_raw_field(path: &Path) -> Result<FieldMap, FormatError> {
    decode_raw_field(&std::fs::read(path)?)
}

/// Sidecar describing how a preview PNG was scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewMeta {
    pub kind: FieldKind,
    pub width: usize,
    pub height: usize,
    /// The field maximum mapped to 255; 0 for an all-zero preview.
    pub v_max: f64,
}

/// 8-bit grayscale preview, `round(255 v / v_max)`.
pub fn preview_png(f: &FieldMap) -> Result<(Vec<u8>, PreviewMeta), FormatError> {
    let v_max = f.values.iter().copied().fold(0.0f64, f64::max);
    let pixels: Vec<u8> = if v_max > 0.0 {
        f.values
            .iter()
            .map(|&v| (255.0 * v.max(0.0) / v_max).round().clamp(0.0, 255.0) as u8)
            .collect()
    } else {
        vec![0; f.values.len()]
    };
    let png = encode_png(&pixels, f.width, f.height, 1)?;
    Ok((
        png,
        PreviewMeta {
            kind: f.kind,
            width: f.width,
            height: f.height,
            v_max,
        },
    ))
}

fn encode_png(pixels: &[u8], width: usize, height: usize, channels: usize) -> Result<Vec<u8>, FormatError> {
    let color = match channels {
        1 => ExtendedColorType::L8,
        2 => ExtendedColorType::La8,
        3 => ExtendedColorType::Rgb8,
        4 => ExtendedColorType::Rgba8,
        c => return Err(FormatError::Channels(c)),
    };
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out).write_image(pixels, width as u32, height as u32, color)?;
    Ok(out)
}

pub fn raster_to_png(r: &Raster) -> Result<Vec<u8>, FormatError> {
    encode_png(&r.data, r.width, r.height, r.channels)
}

/// Decodes any supported image into an RGB raster.
pub fn png_to_raster(bytes: &[u8]) -> Result<Raster, FormatError> {
    let img = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()?
        .decode()?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Ok(Raster::new(w as usize, h as usize, 3, img.into_raw())?)
}

/// Decodes an image into a mask: any nonzero luma is foreground.
pub fn png_to_mask(bytes: &[u8]) -> Result<Mask, FormatError> {
    let img = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()?
        .decode()?
        .into_luma8();
    let (w, h) = img.dimensions();
    Ok(Mask::new(w as usize, h as usize, img.into_raw().into_iter().map(|v| v > 0).collect())?)
}

pub fn mask_to_png(m: &Mask) -> Result<Vec<u8>, FormatError> {
    let pixels: Vec<u8> = m.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_png(&pixels, m.width, m.height, 1)
}

/// Dimensions of an in-memory image, read from its header.
pub fn png_dimensions(bytes: &[u8]) -> Result<(u32, u32), FormatError> {
    Ok(image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()?
        .into_dimensions()?)
}

/// Image dimensions without decoding the pixels.
pub fn image_dimensions(path: &Path) -> Result<(u32, u32), FormatError> {
    Ok(image::image_dimensions(path)?)
}
