//! Batch curation over a directory of images and masks.
//!
//! Layout: `DIR/images/NAME.png`, `DIR/masks/NAME.png` and optionally
//! `DIR/captions/NAME.txt`. Images are never decoded, only their headers.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use blobforge_core::curation::{curate_record, BlobRecord, CurationRules, RejectReason};
use blobforge_core::raster::Mask;
use blobforge_core::ConfidenceLevel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::formats::{image_dimensions, png_to_mask, FormatError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub name: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoFailure {
    pub name: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurateSummary {
    pub total: usize,
    pub accepted: usize,
    /// Count per reason; every reason is listed, zero or not.
    pub rejected: BTreeMap<String, usize>,
    pub rejections: Vec<Rejection>,
    pub io_errors: Vec<IoFailure>,
}

/// Outcome for one (image, mask) pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Accepted(Box<BlobRecord>),
    Rejected(RejectReason),
}

/// Curates one pair whose image dimensions are already known.
pub fn curate_pair(
    name: &str,
    dims: (u32, u32),
    mask: &Mask,
    caption: Option<String>,
    rules: &CurationRules,
    p: ConfidenceLevel,
) -> Verdict {
    match curate_record(dims.0, dims.1, mask, rules, p) {
        Ok(c) => Verdict::Accepted(Box::new(c.into_record(
            format!("images/{name}.png"),
            format!("masks/{name}.png"),
            caption,
            p,
        ))),
        Err(r) => Verdict::Rejected(r),
    }
}

/// Stems of every `*.png` under `DIR/images`, sorted.
pub fn list_inputs(dir: &Path) -> Result<Vec<String>, FormatError> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir.join("images"))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            if let Some(stem) = path.file_stem() {
                names.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    names.sort();
    Ok(names)
}

type Loaded = ((u32, u32), Mask, Option<String>);

fn load_one(dir: &Path, name: &str) -> Result<Loaded, FormatError> {
    let dims = image_dimensions(&dir.join("images").join(format!("{name}.png")))?;
    let mask = png_to_mask(&std::fs::read(dir.join("masks").join(format!("{name}.png")))?)?;
    let caption_path: PathBuf = dir.join("captions").join(format!("{name}.txt"));
    let caption = match std::fs::read_to_string(&caption_path) {
        Ok(s) => Some(s.trim_end().to_string()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    Ok((dims, mask, caption))
}

/// Curates every input pair in parallel. Records come back in name order.
pub fn curate_dir(dir: &Path, rules: &CurationRules, p: ConfidenceLevel) -> Result<(Vec<BlobRecord>, CurateSummary), FormatError> {
    rules.validate()?;
    let names = list_inputs(dir)?;
    let outcomes: Vec<(String, Result<Verdict, String>)> = names
        .par_iter()
        .map(|name| {
            let verdict = load_one(dir, name)
                .map(|(dims, mask, caption)| curate_pair(name, dims, &mask, caption, rules, p))
                .map_err(|e| e.to_string());
            (name.clone(), verdict)
        })
        .collect();

    let mut summary = CurateSummary {
        total: outcomes.len(),
        accepted: 0,
        rejected: RejectReason::ALL.iter().map(|r| (r.as_str().to_string(), 0)).collect(),
        rejections: Vec::new(),
        io_errors: Vec::new(),
    };
    let mut records = Vec::new();
    for (name, outcome) in outcomes {
        match outcome {
            Ok(Verdict::Accepted(rec)) => {
                summary.accepted += 1;
                records.push(*rec);
            }
            Ok(Verdict::Rejected(reason)) => {
                *summary.rejected.entry(reason.as_str().to_string()).or_default() += 1;
                summary.rejections.push(Rejection { name, reason });
            }
            Err(message) => summary.io_errors.push(IoFailure { name, message }),
        }
    }
    Ok((records, summary))
}

/// One JSON object per line.
pub fn write_jsonl(path: &Path, records: &[BlobRecord]) -> Result<(), FormatError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
