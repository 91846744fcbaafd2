//! Occlusion-robustness benchmarking for monocular 3D human pose estimation.
//!
//! The crate synthesizes calibrated occlusions over person crops, decodes
//! volumetric heatmaps into camera-space poses, scores predictions with
//! MPJPE, and sweeps occlusion type × degree to build robustness curves and
//! train × test matrices.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod datamodel;
pub mod geometry;
pub mod heatmap;
pub mod metrics;
pub mod occlusion;
pub mod render;
pub mod seed;
pub mod sweep;
