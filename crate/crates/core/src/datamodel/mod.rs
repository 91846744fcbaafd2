//! Skeletons, poses, frame records and sequence manifests.

mod manifest;
mod subsample;
mod synth;

pub use manifest::{load_manifest, manifest_to_json, parse_manifest, resolve_image_path, save_manifest, Units};
pub use subsample::{adaptive_subsample, adaptive_subsample_poses, stride_subsample};
pub use synth::{generate_synthetic_dataset, write_dataset, BodyModel, BoneSpec, SynthConfig, SyntheticDataset};

use std::path::PathBuf;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, CameraIntrinsics, GeometryError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("pose has non-finite coordinates")]
    NonFinitePose,
    #[error("{context}: expected {expected} joints, found {actual}")]
    JointCount {
        context: String,
        expected: usize,
        actual: usize,
    },
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("manifest has no frames")]
    EmptyManifest,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("image of {width}x{height} px cannot contain the projected figure at frame {frame}: {reason}")]
    ImageTooSmall {
        width: u32,
        height: u32,
        frame: usize,
        reason: String,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Joint names, the root (pelvis) joint, mirror pairs and bones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joint_names: Vec<String>,
    pub root_index: usize,
    /// `(left, right)` joint index pairs swapped by horizontal flips.
    pub left_right_pairs: Vec<(usize, usize)>,
    pub edges: Vec<(usize, usize)>,
}

impl Skeleton {
    pub fn new(
        joint_names: Vec<String>,
        root_index: usize,
        left_right_pairs: Vec<(usize, usize)>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self, DataError> {
        let s = Self { joint_names, root_index, left_right_pairs, edges };
        s.validate()?;
        Ok(s)
    }

    /// The common 17-joint Human3.6M layout, pelvis first.
    pub fn h36m_17() -> Self {
        let names = [
            "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "spine", "thorax", "neck",
            "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
        ];
        Self {
            joint_names: names.iter().map(|s| s.to_string()).collect(),
            root_index: 0,
            left_right_pairs: vec![(4, 1), (5, 2), (6, 3), (11, 14), (12, 15), (13, 16)],
            edges: vec![
                (0, 1),
                (1, 2),
                (2, 3),
                (0, 4),
                (4, 5),
                (5, 6),
                (0, 7),
                (7, 8),
                (8, 9),
                (9, 10),
                (8, 11),
                (11, 12),
                (12, 13),
                (8, 14),
                (14, 15),
                (15, 16),
            ],
        }
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.num_joints();
        if n == 0 {
            return Err(DataError::InvalidSkeleton("no joints".into()));
        }
        if self.root_index >= n {
            return Err(DataError::InvalidSkeleton(format!("root index {} out of range", self.root_index)));
        }
        let mut seen = vec![false; n];
        for &(l, r) in &self.left_right_pairs {
            if l >= n || r >= n {
                return Err(DataError::InvalidSkeleton(format!("pair ({l}, {r}) out of range")));
            }
            if l == r {
                return Err(DataError::InvalidSkeleton(format!("pair ({l}, {r}) mirrors a joint onto itself")));
            }
            for j in [l, r] {
                if std::mem::replace(&mut seen[j], true) {
                    return Err(DataError::InvalidSkeleton(format!("joint {j} appears in two left/right pairs")));
                }
            }
        }
        if let Some(&(a, b)) = self.edges.iter().find(|&&(a, b)| a >= n || b >= n) {
            return Err(DataError::InvalidSkeleton(format!("edge ({a}, {b}) out of range")));
        }
        Ok(())
    }

    /// Index permutation applied by a horizontal flip.
    pub fn flip_permutation(&self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.num_joints()).collect();
        for &(l, r) in &self.left_right_pairs {
            perm.swap(l, r);
        }
        perm
    }

    /// -1 for left joints, +1 for right joints, 0 otherwise.
    pub fn side(&self, joint: usize) -> i8 {
        for &(l, r) in &self.left_right_pairs {
            if joint == l {
                return -1;
            }
            if joint == r {
                return 1;
            }
        }
        0
    }
}

impl Default for Skeleton {
    fn default() -> Self {
        Self::h36m_17()
    }
}

/// Camera-space joint positions in millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct Pose3D {
    joints: Vec<Vector3<f64>>,
}

impl Pose3D {
    pub fn new(joints: Vec<Vector3<f64>>) -> Result<Self, DataError> {
        if joints.iter().any(|j| !j.iter().all(|v| v.is_finite())) {
            return Err(DataError::NonFinitePose);
        }
        Ok(Self { joints })
    }

    pub fn joints(&self) -> &[Vector3<f64>] {
        &self.joints
    }

    pub fn joint(&self, i: usize) -> &Vector3<f64> {
        &self.joints[i]
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn translated(&self, t: &Vector3<f64>) -> Self {
        Self { joints: self.joints.iter().map(|j| j + t).collect() }
    }

    pub fn map(&self, f: impl Fn(usize, &Vector3<f64>) -> Vector3<f64>) -> Result<Self, DataError> {
        Self::new(self.joints.iter().enumerate().map(|(i, j)| f(i, j)).collect())
    }

    pub fn check_joint_count(&self, expected: usize, context: impl Into<String>) -> Result<(), DataError> {
        if self.num_joints() != expected {
            return Err(DataError::JointCount {
                context: context.into(),
                expected,
                actual: self.num_joints(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<[f64; 3]>> for Pose3D {
    type Error = DataError;

    fn try_from(v: Vec<[f64; 3]>) -> Result<Self, Self::Error> {
        Self::new(v.into_iter().map(Vector3::from).collect())
    }
}

impl From<Pose3D> for Vec<[f64; 3]> {
    fn from(p: Pose3D) -> Self {
        p.joints.iter().map(|j| [j.x, j.y, j.z]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub subject: String,
    pub action: String,
    pub camera: CameraIntrinsics,
    pub bbox: BoundingBox,
    #[serde(rename = "joints_mm")]
    pub pose_gt: Pose3D,
    pub image_path: PathBuf,
}

impl FrameRecord {
    pub fn root_depth(&self, root_index: usize) -> f64 {
        self.pose_gt.joint(root_index).z
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub skeleton: Skeleton,
    pub frames: Vec<FrameRecord>,
    pub sampling: SamplingInfo,
}

impl SequenceManifest {
    /// Checks every manifest invariant, naming the offending frame.
    pub fn validate(&self) -> Result<(), DataError> {
        self.skeleton.validate().map_err(|e| DataError::Schema {
            path: "skeleton".into(),
            message: e.to_string(),
        })?;
        let j = self.skeleton.num_joints();
        let mut prev: Option<u64> = None;
        for (i, f) in self.frames.iter().enumerate() {
            let at = |field: &str| format!("frames[{i}].{field} (frame_id {})", f.frame_id);
            if let Some(p) = prev {
                if f.frame_id <= p {
                    return Err(DataError::Schema {
                        path: at("frame_id"),
                        message: format!("frame ids must be strictly increasing, {} follows {p}", f.frame_id),
                    });
                }
            }
            prev = Some(f.frame_id);
            f.camera.validate().map_err(|e| DataError::Schema { path: at("camera"), message: e.to_string() })?;
            f.bbox.validate().map_err(|e| DataError::Schema { path: at("bbox"), message: e.to_string() })?;
            f.pose_gt.check_joint_count(j, at("joints_mm"))?;
            let root_z = f.root_depth(self.skeleton.root_index);
            if !(root_z > 0.0) {
                return Err(DataError::Schema {
                    path: at("joints_mm"),
                    message: format!("root joint depth must be positive, got {root_z} mm"),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Sub-manifest holding only the given frame indices, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            skeleton: self.skeleton.clone(),
            frames: indices.iter().map(|&i| self.frames[i].clone()).collect(),
            sampling: self.sampling.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h36m_skeleton_is_valid() {
        let s = Skeleton::h36m_17();
        s.validate().unwrap();
        assert_eq!(s.num_joints(), 17);
        let perm = s.flip_permutation();
        assert_eq!(perm[1], 4);
        assert_eq!(perm[16], 13);
        assert!(perm.iter().enumerate().all(|(i, &p)| perm[p] == i));
    }

    #[test]
    fn skeleton_invariants() {
        let names = || vec!["a".to_string(), "b".into(), "c".into()];
        assert!(Skeleton::new(names(), 3, vec![], vec![]).is_err());
        assert!(Skeleton::new(names(), 0, vec![(1, 1)], vec![]).is_err());
        assert!(Skeleton::new(names(), 0, vec![(1, 2), (2, 0)], vec![]).is_err());
        assert!(Skeleton::new(names(), 0, vec![], vec![(0, 5)]).is_err());
        assert!(Skeleton::new(names(), 0, vec![(1, 2)], vec![(0, 1), (0, 2)]).is_ok());
    }

    #[test]
    fn pose_rejects_non_finite() {
        assert!(Pose3D::new(vec![Vector3::new(0.0, f64::NAN, 1.0)]).is_err());
        let p: Pose3D = serde_json::from_str("[[1,2,3],[4,5,6]]").unwrap();
        assert_eq!(p.num_joints(), 2);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[[1.0,2.0,3.0],[4.0,5.0,6.0]]");
    }
}
