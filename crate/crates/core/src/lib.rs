//! Blob scene math: ellipse/Gaussian conversion, opacity fields and
//! composition, edits, curation, training-sample construction, metrics and
//! a toy fusion harness. `no_std` with `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod blob;
pub mod curation;
pub mod edit;
mod error;
pub mod field;
pub mod fusion;
pub mod math;
pub mod metrics;
pub mod raster;
pub mod sample;
pub mod scene;

pub use blob::{BlobEllipse, BlobGaussian, ConfidenceLevel};
pub use error::{Error, Result};
pub use scene::{BlobEntry, BlobScene};
