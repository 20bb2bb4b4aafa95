//! Command-line interface.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use blobforge_core::curation::CurationRules;
use blobforge_core::edit::{apply_edit, EditOp};
use blobforge_core::fusion::{run_checks, CheckOptions};
use blobforge_core::sample::{build_training_sample, SampleConfig, SampleError};
use blobforge_core::{BlobScene, ConfidenceLevel};
use clap::{Args, Parser, Subcommand};

use crate::archive::{sample_files, tar_bytes, write_sample_dir};
use crate::bench::{grounding_bench, image_bench, BenchReport, GroundTruth};
use crate::curate::{curate_dir, write_jsonl};
use crate::formats::{encode_raw_field, png_to_mask, png_to_raster, preview_png};
use crate::render::{render_field, RenderFormat, RenderKind, RenderParams};

#[derive(Debug, Parser)]
#[command(name = "blobforge", version, about = "Blob scene toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Render a scene file to PNG or a raw float field.
    Render(RenderArgs),
    /// Apply one edit to a scene file.
    Edit(EditArgs),
    /// Curate a directory of images and masks into blob records.
    Curate(CurateArgs),
    /// Build one training sample from an image and its mask.
    Sample(SampleArgs),
    /// Verify the fusion harness invariants and gradients.
    HarnessCheck(HarnessArgs),
    /// Score predicted masks and/or generated images.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "BLOBFORGE_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, env = "BLOBFORGE_DATA_DIR", default_value = "blobforge-data")]
    pub data_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Scene JSON file.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub kind: RenderKind,
    #[arg(long)]
    pub w: Option<usize>,
    #[arg(long)]
    pub h: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub blob: Option<String>,
    /// `png` or `raw`.
    #[arg(long, default_value = "png", value_parser = parse_format)]
    pub format: RenderFormat,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_kind(s: &str) -> Result<RenderKind, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<RenderFormat, String> {
    match s {
        "png" => Ok(RenderFormat::Png),
        "raw" => Ok(RenderFormat::Raw),
        _ => Err(format!("unknown format {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct EditArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Edit as inline JSON, or `@FILE`.
    #[arg(long)]
    pub op: String,
    /// Defaults to overwriting the input scene.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// JSONL output of accepted records.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON; printed to stdout when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, default_value_t = 480)]
    pub min_short_side: u32,
    #[arg(long, default_value_t = 0.01)]
    pub area_lo: f64,
    #[arg(long, default_value_t = 0.9)]
    pub area_hi: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub min_eig: f64,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// Output directory, or a `.tar` file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub perturb_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub augment_seed: u64,
    #[arg(long)]
    pub caption: Option<String>,
    /// Sample configuration JSON file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HarnessArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    #[arg(long, default_value_t = 2)]
    pub levels: usize,
    /// Where to write the JSON report; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory of predicted masks named after the ground-truth keys.
    #[arg(long, requires = "gt")]
    pub pred_masks: Option<PathBuf>,
    /// JSON object mapping names to ground-truth ellipses.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Directory of `NAME.png` and `NAME.ref.png` pairs.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Serve(a) => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::server::serve(a.addr, a.data_dir))?;
        }
        Command::Render(a) => {
            let scene: BlobScene = read_json(&a.scene)?;
            let params = RenderParams {
                kind: a.kind,
                w: a.w,
                h: a.h,
                p: a.p,
                blob: a.blob,
                format: a.format,
            };
            let field = render_field(&scene, &params)?;
            match a.format {
                RenderFormat::Raw => std::fs::write(&a.out, encode_raw_field(&field))?,
                RenderFormat::Png => {
                    let (png, meta) = preview_png(&field)?;
                    std::fs::write(&a.out, png)?;
                    emit_json(&meta, None)?;
                }
            }
        }
        Command::Edit(a) => {
            let scene: BlobScene = read_json(&a.scene)?;
            let op: EditOp = match a.op.strip_prefix('@') {
                Some(path) => read_json(Path::new(path))?,
                None => serde_json::from_str(&a.op).context("parsing --op")?,
            };
            op.validate()?;
            let edited = apply_edit(&scene, &op)?;
            emit_json(&edited, Some(a.out.as_deref().unwrap_or(&a.scene)))?;
        }
        Command::Curate(a) => {
            let rules = CurationRules {
                min_short_side: a.min_short_side,
                area_ratio_range: (a.area_lo, a.area_hi),
                min_cov_eig: a.min_eig,
                ..Default::default()
            };
            let p = ConfidenceLevel::new(a.confidence)?;
            let (records, summary) = curate_dir(&a.input, &rules, p)?;
            write_jsonl(&a.out, &records)?;
            tracing::info!(total = summary.total, accepted = summary.accepted, "curated");
            emit_json(&summary, a.summary.as_deref())?;
        }
        Command::Sample(a) => {
            let image = png_to_raster(&std::fs::read(&a.image)?)?;
            let mask = png_to_mask(&std::fs::read(&a.mask)?)?;
            let mut cfg: SampleConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => SampleConfig::default(),
            };
            cfg.perturb.seed = a.perturb_seed;
            cfg.augment_seed = a.augment_seed;
            if let Some(c) = a.caption {
                cfg.caption = c;
            }
            let sample = match build_training_sample(&image, &mask, &cfg) {
                Ok(s) => s,
                Err(SampleError::Rejected(r)) => bail!("rejected: {r}"),
                Err(SampleError::Invalid(e)) => return Err(e.into()),
            };
            let files = sample_files(&sample, &cfg)?;
            if a.out.extension().is_some_and(|e| e == "tar") {
                std::fs::write(&a.out, tar_bytes("sample", &files)?)?;
            } else {
                write_sample_dir(&a.out, &files)?;
            }
        }
        Command::HarnessCheck(a) => {
            let report = run_checks(CheckOptions {
                seed: a.seed,
                size: a.size,
                levels: a.levels,
                ..Default::default()
            })?;
            for inv in &report.invariants {
                eprintln!("{} {}: {}", if inv.passed { "PASS" } else { "FAIL" }, inv.name, inv.detail);
            }
            emit_json(&report, a.report.as_deref())?;
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bench(a) => {
            if a.pred_masks.is_none() && a.images.is_none() {
                bail!("nothing to do: pass --pred-masks/--gt and/or --images");
            }
            let grounding = match (&a.pred_masks, &a.gt) {
                (Some(dir), Some(gt)) => Some(grounding_bench(dir, &read_json::<GroundTruth>(gt)?)?),
                _ => None,
            };
            let images = a.images.as_deref().map(image_bench).transpose()?;
            emit_json(&BenchReport { grounding, images }, a.out.as_deref())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
