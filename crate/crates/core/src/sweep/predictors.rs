//! Reference predictors that stand in for a trained network.

use std::path::PathBuf;

use image::RgbImage;
use nalgebra::{Point2, Vector3};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EvalDataset, Prediction, Predictor, PredictorError, PredictorInput, SweepError};
use crate::datamodel::Pose3D;
use crate::geometry::{backproject, project};
use crate::occlusion::occluded_fraction_near;
use crate::seed::derive_rng;

/// Returns the ground truth.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub label: String,
}

impl Predictor for Oracle {
    fn label(&self) -> &str {
        &self.label
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<Prediction, PredictorError> {
        Ok(Prediction::Pose(input.reference.pose_gt.clone()))
    }
}

/// Ground truth plus isotropic Gaussian noise on every non-root joint. The
/// noise depends only on the seed and the frame id, never on the pixels.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    pub label: String,
    pub sigma_mm: f64,
    pub seed: u64,
}

impl Predictor for NoisyOracle {
    fn label(&self) -> &str {
        &self.label
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<Prediction, PredictorError> {
        let normal = Normal::new(0.0, self.sigma_mm).map_err(|e| PredictorError::Failed(e.to_string()))?;
        let mut rng = derive_rng(self.seed, "noisy_oracle", &[input.frame_id]);
        let root = input.skeleton.root_index;
        let gt = input.reference.pose_gt;
        let joints = gt
            .joints()
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let n = Vector3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
                if j == root { *p } else { p + n }
            })
            .collect();
        Pose3D::new(joints).map(Prediction::Pose).map_err(|e| PredictorError::Failed(e.to_string()))
    }
}

/// Displaces every non-root joint along a fixed per-joint direction by
/// `base_mm · J/(J−1) + sensitivity_mm · o`, where `o` is the occluded
/// fraction of a disk of `radius_px` around the joint's crop projection.
/// The root-included MPJPE is therefore `base_mm + sensitivity_mm · mean(o)`
/// with the mean taken over all `J` joints (root contributing zero).
#[derive(Debug, Clone)]
pub struct OcclusionMock {
    pub label: String,
    pub base_mm: f64,
    pub sensitivity_mm: f64,
    pub radius_px: f64,
}

impl OcclusionMock {
    /// Occluded fraction around every joint, in joint order.
    pub fn joint_occlusion(&self, input: &PredictorInput<'_>) -> Result<Vec<f64>, PredictorError> {
        input
            .reference
            .pose_gt
            .joints()
            .iter()
            .map(|p| {
                let q = input.transform.warp_point(&project(input.camera, p)?)?;
                Ok(input.reference.masks.map_or(0.0, |m| occluded_fraction_near(m, q.x, q.y, self.radius_px)))
            })
            .collect()
    }
}

/// Evenly spread unit vectors (golden-angle spiral).
fn direction(j: usize, n: usize) -> Vector3<f64> {
    let z = 1.0 - 2.0 * (j as f64 + 0.5) / n as f64;
    let r = (1.0 - z * z).sqrt();
    let phi = j as f64 * std::f64::consts::PI * (3.0 - 5f64.sqrt());
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

impl Predictor for OcclusionMock {
    fn label(&self) -> &str {
        &self.label
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<Prediction, PredictorError> {
        let occ = self.joint_occlusion(input)?;
        let gt = input.reference.pose_gt;
        let n = gt.num_joints();
        let root = input.skeleton.root_index;
        let base = if n > 1 { self.base_mm * n as f64 / (n - 1) as f64 } else { 0.0 };
        let joints = gt
            .joints()
            .iter()
            .enumerate()
            .map(|(j, p)| if j == root { *p } else { p + direction(j, n) * (base + self.sensitivity_mm * occ[j]) })
            .collect();
        Pose3D::new(joints).map(Prediction::Pose).map_err(|e| PredictorError::Failed(e.to_string()))
    }
}

const THUMB: u32 = 32;

fn thumbnail(img: &RgbImage) -> Vec<f32> {
    let (w, h) = img.dimensions();
    let mut out = vec![0f32; (THUMB * THUMB * 3) as usize];
    let mut counts = vec![0f32; (THUMB * THUMB) as usize];
    for (x, y, p) in img.enumerate_pixels() {
        let tx = x * THUMB / w;
        let ty = y * THUMB / h;
        let i = (ty * THUMB + tx) as usize;
        counts[i] += 1.0;
        for c in 0..3 {
            out[i * 3 + c] += p.0[c] as f32;
        }
    }
    for (i, v) in out.iter_mut().enumerate() {
        *v /= counts[i / 3].max(1.0);
    }
    out
}

/// Returns the training pose whose crop thumbnail is closest to the query.
/// Poses are stored root-relative in their crop's virtual camera frame and
/// mapped back through the query crop's rotation.
#[derive(Debug, Clone)]
pub struct NearestNeighbour {
    pub label: String,
    thumbs: Vec<Vec<f32>>,
    poses: Vec<Vec<Vector3<f64>>>,
}

impl NearestNeighbour {
    pub fn from_dataset(label: impl Into<String>, train: &EvalDataset) -> Result<Self, SweepError> {
        if train.is_empty() {
            return Err(SweepError::InvalidConfig("nearest-neighbour baseline needs training frames".into()));
        }
        let root = train.skeleton.root_index;
        let (thumbs, poses) = train
            .frames
            .iter()
            .map(|f| {
                let r = f.transform.rotation();
                let origin = f.record.pose_gt.joint(root);
                let rel = f.record.pose_gt.joints().iter().map(|p| r * (p - origin)).collect();
                (thumbnail(&f.crop), rel)
            })
            .unzip();
        Ok(Self { label: label.into(), thumbs, poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

impl Predictor for NearestNeighbour {
    fn label(&self) -> &str {
        &self.label
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<Prediction, PredictorError> {
        let q = thumbnail(input.crop);
        let best = self
            .thumbs
            .iter()
            .map(|t| t.iter().zip(&q).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>())
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc })
            .0;
        let c = input.transform.crop_size() as f64 / 2.0;
        let centre = input.transform.inverse_warp_point(&Point2::new(c, c))?;
        let root = backproject(input.camera, &centre, input.root_depth_mm)?;
        let rt = input.transform.rotation().transpose();
        let joints = self.poses[best].iter().map(|v| root + rt * v).collect();
        Pose3D::new(joints).map(Prediction::Pose).map_err(|e| PredictorError::Failed(e.to_string()))
    }
}

/// Serializable choice of reference predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferencePredictor {
    Oracle,
    NoisyOracle {
        sigma_mm: f64,
    },
    OcclusionMock {
        base_mm: f64,
        sensitivity_mm: f64,
        /// Defaults to 1/16 of the crop side.
        #[serde(default)]
        radius_px: Option<f64>,
    },
    NnBaseline {
        train_manifest: PathBuf,
    },
}

impl ReferencePredictor {
    pub fn default_label(&self) -> String {
        match self {
            ReferencePredictor::Oracle => "oracle".into(),
            ReferencePredictor::NoisyOracle { sigma_mm } => format!("noisy_oracle_{sigma_mm}"),
            ReferencePredictor::OcclusionMock { sensitivity_mm, .. } => format!("occlusion_mock_{sensitivity_mm}"),
            ReferencePredictor::NnBaseline { .. } => "nn_baseline".into(),
        }
    }
}

/// Builds a reference predictor. The nearest-neighbour baseline loads and
/// crops its training manifest with the given crop parameters.
pub fn make_reference_predictor(
    spec: &ReferencePredictor,
    label: Option<String>,
    seed: u64,
    crop_size: u32,
    coverage: f64,
) -> Result<Box<dyn Predictor>, SweepError> {
    let label = label.unwrap_or_else(|| spec.default_label());
    Ok(match spec {
        ReferencePredictor::Oracle => Box::new(Oracle { label }),
        ReferencePredictor::NoisyOracle { sigma_mm } => {
            if !(sigma_mm.is_finite() && *sigma_mm >= 0.0) {
                return Err(SweepError::InvalidConfig(format!("sigma_mm must be ≥ 0, got {sigma_mm}")));
            }
            Box::new(NoisyOracle { label, sigma_mm: *sigma_mm, seed })
        }
        ReferencePredictor::OcclusionMock { base_mm, sensitivity_mm, radius_px } => {
            let radius_px = radius_px.unwrap_or(crop_size as f64 / 16.0);
            if !(*base_mm >= 0.0 && *sensitivity_mm >= 0.0 && radius_px > 0.0) {
                return Err(SweepError::InvalidConfig("mock base and sensitivity must be ≥ 0, radius > 0".into()));
            }
            Box::new(OcclusionMock { label, base_mm: *base_mm, sensitivity_mm: *sensitivity_mm, radius_px })
        }
        ReferencePredictor::NnBaseline { train_manifest } => {
            let train = EvalDataset::load(train_manifest, crop_size, coverage)?;
            Box::new(NearestNeighbour::from_dataset(label, &train)?)
        }
    })
}
