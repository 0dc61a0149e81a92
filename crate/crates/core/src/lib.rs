//! Keyframe animation → rendered face → (image, control vector) dataset
//! pipeline, plus an evaluation harness for image-to-control predictors.
//!
//! The stages, in data-flow order:
//!
//! - [`control_space`]: the 30-channel control registry and vectors
//! - [`curve`] / [`animation`]: keyframe curves, clips, fixed-step sampling
//! - [`render`]: deterministic grayscale face renderer
//! - [`similarity`]: SSIM and near-duplicate removal
//! - [`dataset`]: build, verify, statistics
//! - [`eval`]: scoring and reference predictors
//!
//! Data-parallel stages take an [`Exec`]; with the `parallel` feature off,
//! `Exec::Parallel` runs sequentially and every output is unchanged.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod animation;
pub mod control_space;
pub mod curve;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod plot;
pub mod render;
pub mod similarity;

pub use animation::{make_synthetic_clips, sample_clip, AnimationClip, SampledSequence};
pub use control_space::{ControlRegistry, ControlVector, NUM_CONTROLS};
pub use curve::{Interp, Keyframe, Track};
pub use dataset::{BuildConfig, DatasetManifest, Record, Split};
pub use error::{Error, Result};
pub use eval::{EvalReport, Predictor};
pub use exec::Exec;
pub use render::{FaceGeometry, Frame, Renderer};
pub use similarity::{ssim, Deduper, SsimParams, Window};
