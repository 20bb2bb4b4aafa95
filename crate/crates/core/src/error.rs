use alloc::string::String;

use crate::curation::FitError;

/// Errors produced by the engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(&'static str),
    /// A covariance is singular, not positive definite or otherwise unusable.
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    /// Two inputs disagree on their dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// An edit names a blob id the scene does not contain.
    #[error("blob `{0}` not found")]
    NotFound(String),
    /// A value violates a type or scene invariant.
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("ellipse fit failed: {0}")]
    Fit(#[from] FitError),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
