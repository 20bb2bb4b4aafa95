//! Serialization of training samples as a directory or a reproducible tar.

use std::path::Path;

use blobforge_core::blob::gaussian_to_ellipse;
use blobforge_core::sample::{SampleConfig, TrainingSample};
use blobforge_core::{BlobEllipse, BlobGaussian};
use serde::{Deserialize, Serialize};

use crate::formats::{encode_raw_field, raster_to_png, FormatError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobPair {
    pub gaussian: BlobGaussian,
    pub ellipse: BlobEllipse,
}

/// Contents of `blobs.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBlobs {
    pub source: BlobPair,
    pub target: BlobPair,
}

/// Named files of one sample, sorted by name.
pub fn sample_files(sample: &TrainingSample, cfg: &SampleConfig) -> Result<Vec<(String, Vec<u8>)>, FormatError> {
    let blobs = SampleBlobs {
        source: BlobPair {
            gaussian: sample.source_blob,
            ellipse: gaussian_to_ellipse(&sample.source_blob, cfg.confidence)?,
        },
        target: BlobPair {
            gaussian: sample.target_blob,
            ellipse: sample.target_ellipse,
        },
    };
    let mut files = vec![
        ("augmentation_log.json".to_string(), json(sample.augmentation_log.as_slice())),
        ("bg.png".to_string(), raster_to_png(&sample.background)?),
        ("blobs.json".to_string(), json(&blobs)),
        ("caption.txt".to_string(), sample.caption.clone().into_bytes()),
        ("config.json".to_string(), json(cfg)),
        ("dual_mask.bf".to_string(), encode_raw_field(&sample.dual_mask)),
        ("fg.png".to_string(), raster_to_png(&sample.foreground)?),
        ("fg_mask.bf".to_string(), encode_raw_field(&sample.fg_mask)),
    ];
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(files)
}

fn json<T: Serialize + ?Sized>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("in-memory serialization");
    out.push(b'\n');
    out
}

pub fn write_sample_dir(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<(), FormatError> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

/// Tar with fixed metadata so equal inputs give byte-identical archives.
pub fn tar_bytes(prefix: &str, files: &[(String, Vec<u8>)]) -> Result<Vec<u8>, FormatError> {
    let mut builder = tar::Builder::new(Vec::new());
    builder.mode(tar::HeaderMode::Deterministic);
    for (name, bytes) in files {
        let mut header = tar::Header::new_ustar();
        header.set_size(bytes.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        let path = if prefix.is_empty() {
            name.clone()
        } else {
            format!("{prefix}/{name}")
        };
        builder.append_data(&mut header, path, bytes.as_slice())?;
    }
    Ok(builder.into_inner()?)
}
