//! Toy dual-branch harness: in-context inputs, level-wise gated fusion,
//! denoising and identity losses, with analytic gradients checked against
//! finite differences.

mod batch;
mod check;
mod dropout;
mod grad;
mod input;
mod loss;
mod model;
mod schedule;
mod tensor;

pub use batch::{BatchParts, HarnessBatch};
pub use check::{run_checks, CheckOptions, HarnessReport, InvariantResult, GRAD_TOLERANCE, LOSS_TOLERANCE};
pub use dropout::{apply_dropout, dropout_flags, DropoutFlags, DropoutProbs};
pub use grad::{grad_check, numeric_gradients, relative_error, GradCheck, GroupError, DEFAULT_FD_STEP, RELATIVE_FLOOR};
pub use input::{build_bg_input, build_fg_input, ChannelGroup, Group, Half, InContextInput, InContextLayout};
pub use loss::{denoise_loss, identity_loss, loss_and_gradients, loss_total, Gradients, LossBreakdown};
pub use model::{HarnessConfig, HarnessState, Level, LevelFeatures, Linear, ParamId, ParamKind};
pub use schedule::{diffuse_forward, lambda_between, lambda_schedule, NoiseSchedule};
pub use tensor::LatentTensor;
