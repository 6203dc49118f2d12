//! Multirate video analysis toolkit.
//!
//! - [`sampler`]: consecutive, fixed-stride and random temporal skipping
//!   clip sampling, segment partitioning, evaluation anchors.
//! - [`flow`]: inverse warping, Charbonnier photometric loss, forward-backward
//!   occlusion flags and the occlusion-aware loss with analytic gradients.
//! - [`bilinear`]: exact bilinear pooling and its Tensor Sketch approximation.
//! - [`synth`]: synthetic sprite videos with exact flow and occlusion ground
//!   truth, and frame-rate perturbations.
//! - [`pipeline`]: clip features, descriptor classifier, ten-crop evaluation,
//!   late fusion and the frame-rate robustness experiment.

pub mod bilinear;
pub mod error;
pub mod flow;
pub mod media;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
