//! Volumetric joint heatmaps and their decoding into camera-space poses.
//!
//! A heatmap holds `J × D × H × W` scores. The `W` and `H` axes span the crop
//! image (`crop_size` pixels each); the `D` axis spans `depth_span_mm` of depth
//! relative to the root joint, with zero at the centre of the volume. Networks
//! that emit `J·D` channels of `H × W` maps produce exactly this layout after
//! reshaping channel `j·D + d` to `(j, d)`.

mod format;

pub use format::{load_heatmap, read_heatmap, save_heatmap, write_heatmap, MAGIC};

use nalgebra::{Point2, Vector3};
use thiserror::Error;

use crate::datamodel::{DataError, Pose3D};
use crate::geometry::{backproject, project, CameraIntrinsics, CropTransform, GeometryError};

pub const DEFAULT_DEPTH_SPAN_MM: f64 = 2000.0;
pub const DEFAULT_RESOLUTION: usize = 16;

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("invalid heatmap shape: {0}")]
    InvalidShape(String),
    #[error("heatmap contains non-finite scores")]
    NonFinite,
    #[error("heatmap spans a {heatmap} px crop but the transform produces {transform} px")]
    CropMismatch { heatmap: u32, transform: u32 },
    #[error("joint {joint} decodes to non-positive depth {depth_mm} mm")]
    NonPositiveDepth { joint: usize, depth_mm: f64 },
    #[error("joint {joint} lies outside the heatmap volume at voxel ({d:.2}, {h:.2}, {w:.2})")]
    OutOfVolume { joint: usize, d: f64, h: f64, w: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed heatmap file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Grid resolution and depth extent of a heatmap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapShape {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    pub depth_span_mm: f64,
}

impl Default for HeatmapShape {
    fn default() -> Self {
        Self {
            depth: DEFAULT_RESOLUTION,
            height: DEFAULT_RESOLUTION,
            width: DEFAULT_RESOLUTION,
            depth_span_mm: DEFAULT_DEPTH_SPAN_MM,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumetricHeatmap {
    joints: usize,
    shape: HeatmapShape,
    scores: Vec<f32>,
    crop_size: u32,
}

/// Continuous voxel-space coordinate; voxel `i` has its centre at `i + 0.5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelCoord {
    pub d: f64,
    pub h: f64,
    pub w: f64,
}

/// A joint in crop pixels plus depth relative to the root, mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedJoint {
    pub u: f64,
    pub v: f64,
    pub dz: f64,
}

impl VolumetricHeatmap {
    pub fn new(joints: usize, shape: HeatmapShape, scores: Vec<f32>, crop_size: u32) -> Result<Self, HeatmapError> {
        if joints == 0 || shape.depth == 0 || shape.height == 0 || shape.width == 0 {
            return Err(HeatmapError::InvalidShape(format!(
                "{joints}x{}x{}x{}",
                shape.depth, shape.height, shape.width
            )));
        }
        if !(shape.depth_span_mm > 0.0 && shape.depth_span_mm.is_finite()) || crop_size == 0 {
            return Err(HeatmapError::InvalidShape("depth span and crop size must be positive".into()));
        }
        let expected = joints * shape.depth * shape.height * shape.width;
        if scores.len() != expected {
            return Err(HeatmapError::InvalidShape(format!("{} scores for {expected} voxels", scores.len())));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(HeatmapError::NonFinite);
        }
        Ok(Self { joints, shape, scores, crop_size })
    }

    pub fn zeros(joints: usize, shape: HeatmapShape, crop_size: u32) -> Result<Self, HeatmapError> {
        Self::new(joints, shape, vec![0.0; joints * shape.depth * shape.height * shape.width], crop_size)
    }

    pub fn num_joints(&self) -> usize {
        self.joints
    }

    pub fn shape(&self) -> HeatmapShape {
        self.shape
    }

    pub fn crop_size(&self) -> u32 {
        self.crop_size
    }

    pub fn depth_span_mm(&self) -> f64 {
        self.shape.depth_span_mm
    }

    pub fn voxels_per_joint(&self) -> usize {
        self.shape.depth * self.shape.height * self.shape.width
    }

    /// Row-major `(j, d, h, w)` scores.
    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn joint_scores(&self, j: usize) -> &[f32] {
        let n = self.voxels_per_joint();
        &self.scores[j * n..(j + 1) * n]
    }

    pub fn index(&self, j: usize, d: usize, h: usize, w: usize) -> usize {
        ((j * self.shape.depth + d) * self.shape.height + h) * self.shape.width + w
    }

    pub fn get(&self, j: usize, d: usize, h: usize, w: usize) -> f32 {
        self.scores[self.index(j, d, h, w)]
    }

    pub fn set(&mut self, j: usize, d: usize, h: usize, w: usize, value: f32) {
        assert!(value.is_finite(), "heatmap scores must be finite");
        let i = self.index(j, d, h, w);
        self.scores[i] = value;
    }

    /// Mirrors the width axis.
    pub fn flipped_width(&self) -> Self {
        let mut out = self.clone();
        let w = self.shape.width;
        for row in out.scores.chunks_mut(w) {
            row.reverse();
        }
        out
    }

    /// Depth covered by one voxel along the depth axis.
    pub fn depth_voxel_mm(&self) -> f64 {
        self.shape.depth_span_mm / self.shape.depth as f64
    }
}

/// Expected voxel coordinate of each joint under the softmax of its scores
/// taken jointly over the whole volume.
pub fn soft_argmax(heatmap: &VolumetricHeatmap) -> Vec<VoxelCoord> {
    let HeatmapShape { depth, height, width, .. } = heatmap.shape;
    (0..heatmap.joints)
        .map(|j| {
            let s = heatmap.joint_scores(j);
            let max = s.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
            let mut total = 0.0;
            let mut sum_d = 0.0;
            let mut sum_h = 0.0;
            let mut sum_w = 0.0;
            let mut i = 0;
            for d in 0..depth {
                for h in 0..height {
                    let mut row = 0.0;
                    for w in 0..width {
                        let e = (s[i] as f64 - max).exp();
                        row += e;
                        sum_w += e * (w as f64 + 0.5);
                        i += 1;
                    }
                    total += row;
                    sum_h += row * (h as f64 + 0.5);
                    sum_d += row * (d as f64 + 0.5);
                }
            }
            VoxelCoord { d: sum_d / total, h: sum_h / total, w: sum_w / total }
        })
        .collect()
}

/// Crop-pixel position and root-relative depth per joint.
pub fn decode_joints(heatmap: &VolumetricHeatmap) -> Vec<DecodedJoint> {
    let crop = heatmap.crop_size as f64;
    let s = heatmap.shape;
    soft_argmax(heatmap)
        .into_iter()
        .map(|c| DecodedJoint {
            u: c.w * crop / s.width as f64,
            v: c.h * crop / s.height as f64,
            dz: (c.d / s.depth as f64 - 0.5) * s.depth_span_mm,
        })
        .collect()
}

/// Decodes a heatmap into a camera-space pose using the known root depth.
pub fn decode_pose(
    heatmap: &VolumetricHeatmap,
    transform: &CropTransform,
    camera: &CameraIntrinsics,
    root_depth_mm: f64,
    root_index: usize,
) -> Result<Pose3D, HeatmapError> {
    if !(root_depth_mm > 0.0) {
        return Err(HeatmapError::InvalidParameter(format!("root depth must be positive, got {root_depth_mm}")));
    }
    if heatmap.crop_size != transform.crop_size() {
        return Err(HeatmapError::CropMismatch { heatmap: heatmap.crop_size, transform: transform.crop_size() });
    }
    if root_index >= heatmap.joints {
        return Err(HeatmapError::InvalidParameter(format!("root index {root_index} out of range")));
    }
    let joints = decode_joints(heatmap)
        .into_iter()
        .enumerate()
        .map(|(j, dj)| {
            let z = if j == root_index { root_depth_mm } else { root_depth_mm + dj.dz };
            if !(z > 0.0) {
                return Err(HeatmapError::NonPositiveDepth { joint: j, depth_mm: z });
            }
            let pixel = transform.inverse_warp_point(&Point2::new(dj.u, dj.v))?;
            Ok(backproject(camera, &pixel, z)?)
        })
        .collect::<Result<Vec<_>, HeatmapError>>()?;
    Ok(Pose3D::new(joints)?)
}

/// Voxel-space image of each joint, the continuous inverse of [`decode_joints`].
pub fn voxel_targets(
    pose: &Pose3D,
    transform: &CropTransform,
    camera: &CameraIntrinsics,
    root_depth_mm: f64,
    shape: HeatmapShape,
) -> Result<Vec<VoxelCoord>, HeatmapError> {
    let crop = transform.crop_size() as f64;
    pose.joints()
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let q = transform.warp_point(&project(camera, p)?)?;
            let c = VoxelCoord {
                d: ((p.z - root_depth_mm) / shape.depth_span_mm + 0.5) * shape.depth as f64,
                h: q.y * shape.height as f64 / crop,
                w: q.x * shape.width as f64 / crop,
            };
            let inside = |x: f64, n: usize| (0.0..=n as f64).contains(&x);
            if !(inside(c.d, shape.depth) && inside(c.h, shape.height) && inside(c.w, shape.width)) {
                return Err(HeatmapError::OutOfVolume { joint: j, d: c.d, h: c.h, w: c.w });
            }
            Ok(c)
        })
        .collect()
}

/// Renders a pose as log-domain isotropic Gaussians: the score of a voxel is
/// `-r² / (2σ²)` for voxel-space distance `r` from the joint's target, so the
/// softmax of each joint is a discretized Gaussian around the target and its
/// argmax is the nearest voxel.
pub fn encode_gaussian(
    pose: &Pose3D,
    transform: &CropTransform,
    camera: &CameraIntrinsics,
    root_depth_mm: f64,
    sigma_voxels: f64,
    shape: HeatmapShape,
) -> Result<VolumetricHeatmap, HeatmapError> {
    if !(sigma_voxels > 0.0) {
        return Err(HeatmapError::InvalidParameter(format!("sigma must be positive, got {sigma_voxels}")));
    }
    let targets = voxel_targets(pose, transform, camera, root_depth_mm, shape)?;
    let mut scores = Vec::with_capacity(targets.len() * shape.depth * shape.height * shape.width);
    let inv = 1.0 / (2.0 * sigma_voxels * sigma_voxels);
    for t in &targets {
        for d in 0..shape.depth {
            let dd = (d as f64 + 0.5 - t.d).powi(2);
            for h in 0..shape.height {
                let dh = (h as f64 + 0.5 - t.h).powi(2);
                for w in 0..shape.width {
                    let dw = (w as f64 + 0.5 - t.w).powi(2);
                    scores.push((-(dd + dh + dw) * inv) as f32);
                }
            }
        }
    }
    VolumetricHeatmap::new(targets.len(), shape, scores, transform.crop_size())
}

/// Mean absolute coordinate difference over joints and axes, mm.
pub fn l1_loss(pred: &Pose3D, gt: &Pose3D) -> Result<f64, HeatmapError> {
    pred.check_joint_count(gt.num_joints(), "prediction")?;
    if gt.num_joints() == 0 {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .joints()
        .iter()
        .zip(gt.joints())
        .map(|(a, b): (&Vector3<f64>, &Vector3<f64>)| (a - b).abs().sum())
        .sum();
    Ok(sum / (3 * gt.num_joints()) as f64)
}
