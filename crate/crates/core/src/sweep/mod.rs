//! Occlusion sweeps: evaluate predictors over occluder kinds × degrees and
//! aggregate the errors into robustness curves and train × test matrices.
//!
//! Every (frame, kind, degree) cell draws its occluders from a seed hashed
//! from the run seed and those three coordinates, so adding a kind or a
//! degree never changes the occlusions of another cell. Degree 0 is
//! evaluated once without occlusion and shared by every kind.

mod predictors;
mod report;

pub use predictors::{
    make_reference_predictor, NearestNeighbour, NoisyOracle, OcclusionMock, Oracle, ReferencePredictor,
};
pub use report::{
    compare, config_hash, read_result_table, write_comparison_csv, write_curves_csv, write_matrix_csv,
    Comparison, ComparisonRow, ResultTable, RunMetadata,
};

use std::path::Path;
use std::sync::Mutex;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{load_manifest, resolve_image_path, DataError, FrameRecord, Pose3D, SequenceManifest, Skeleton};
use crate::geometry::{make_crop_transform, warp_image, BoundingBox, CameraIntrinsics, CropTransform, GeometryError, Interpolation};
use crate::heatmap::{decode_pose, HeatmapError, VolumetricHeatmap};
use crate::metrics::{mean_std, per_joint_errors, ErrorRecord, MetricsError};
use crate::occlusion::{
    composite, OccluderConfig, OccluderKind, OccluderMaskSet, OcclusionError, OcclusionGenerator, OcclusionSpec,
    ObjectLibrary, ObjectSource, Split,
};
use crate::seed::{degree_key, derive_seed};

/// Degrees averaged into each train × test matrix cell.
pub const MATRIX_DEGREES: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),
    #[error("curve for {label}/{kind} lacks degree {degree}")]
    MissingDegree { label: String, kind: OccluderKind, degree: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Occlusion(#[from] OcclusionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A frame prepared for evaluation: the virtual-camera crop and the person
/// box in crop coordinates.
#[derive(Debug, Clone)]
pub struct EvalFrame {
    pub record: FrameRecord,
    pub crop: RgbImage,
    pub transform: CropTransform,
    pub bbox_crop: BoundingBox,
}

#[derive(Debug, Clone)]
pub struct EvalDataset {
    pub skeleton: Skeleton,
    pub frames: Vec<EvalFrame>,
    pub crop_size: u32,
}

impl EvalDataset {
    /// Crops every frame of `manifest`; `images[i]` belongs to frame `i`.
    pub fn prepare(manifest: &SequenceManifest, images: &[RgbImage], crop_size: u32, coverage: f64) -> Result<Self, SweepError> {
        manifest.validate()?;
        if images.len() != manifest.len() {
            return Err(SweepError::InvalidConfig(format!(
                "{} images for {} frames",
                images.len(),
                manifest.len()
            )));
        }
        let frames = manifest
            .frames
            .iter()
            .zip(images)
            .map(|(f, img)| {
                let transform = make_crop_transform(&f.camera, &f.bbox, crop_size, coverage)?;
                let crop = warp_image(&transform, img, Interpolation::Bilinear)?;
                let bbox_crop = transform.warp_bbox(&f.bbox)?;
                Ok(EvalFrame { record: f.clone(), crop, transform, bbox_crop })
            })
            .collect::<Result<_, SweepError>>()?;
        Ok(Self { skeleton: manifest.skeleton.clone(), frames, crop_size })
    }

    /// Loads a manifest and its images from disk, then crops them.
    pub fn load(manifest_path: impl AsRef<Path>, crop_size: u32, coverage: f64) -> Result<Self, SweepError> {
        let path = manifest_path.as_ref();
        let manifest = load_manifest(path)?;
        let images = manifest
            .frames
            .iter()
            .map(|f| {
                let p = resolve_image_path(path, &f.image_path);
                image::open(&p)
                    .map(|i| i.to_rgb8())
                    .map_err(|source| SweepError::Image { path: p.display().to_string(), source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::prepare(&manifest, &images, crop_size, coverage)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Ground truth and occluder layout, for reference predictors only. A
/// predictor standing in for a trained network must not read these.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceInfo<'a> {
    pub pose_gt: &'a Pose3D,
    pub masks: Option<&'a OccluderMaskSet>,
}

#[derive(Debug, Clone, Copy)]
pub struct PredictorInput<'a> {
    pub frame_id: u64,
    pub crop: &'a RgbImage,
    pub transform: &'a CropTransform,
    pub camera: &'a CameraIntrinsics,
    pub root_depth_mm: f64,
    pub skeleton: &'a Skeleton,
    pub reference: ReferenceInfo<'a>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Pose(Pose3D),
    Heatmap(VolumetricHeatmap),
}

pub trait Predictor: Send + Sync {
    /// Row label, usually the training augmentation it stands for.
    fn label(&self) -> &str;

    fn predict(&self, input: &PredictorInput<'_>) -> Result<Prediction, PredictorError>;

    /// Whether the harness may call `predict` from several threads at once.
    fn concurrent_safe(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub seed: u64,
    pub kinds: Vec<OccluderKind>,
    pub degrees: Vec<f64>,
    #[serde(default = "default_true")]
    pub include_root: bool,
    /// Object split used for evaluation occluders.
    #[serde(default = "default_split")]
    pub object_split: Split,
    #[serde(default)]
    pub occluders: OccluderConfig,
}

fn default_true() -> bool {
    true
}

fn default_split() -> Split {
    Split::Test
}

/// `0.0, step, 2·step, … ≤ max`, rounded to thousandths.
pub fn degree_grid(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step + 1e-9).floor() as usize;
    (0..=n).map(|i| (i as f64 * step * 1000.0).round() / 1000.0).collect()
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            kinds: OccluderKind::ALL.to_vec(),
            degrees: degree_grid(0.1, 0.7),
            include_root: true,
            object_split: Split::Test,
            occluders: OccluderConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.kinds.is_empty() || self.degrees.is_empty() {
            return Err(SweepError::InvalidConfig("kinds and degrees must be non-empty".into()));
        }
        if self.kinds.contains(&OccluderKind::None) {
            return Err(SweepError::InvalidConfig("kind none is implied by degree 0".into()));
        }
        for w in self.degrees.windows(2) {
            if degree_key(w[1]) <= degree_key(w[0]) {
                return Err(SweepError::InvalidConfig("degrees must be strictly increasing".into()));
            }
        }
        for &d in &self.degrees {
            OcclusionSpec::new(OccluderKind::Circles, d, 0)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub degree: f64,
    pub mean_mm: f64,
    pub std_mm: f64,
    pub n: usize,
    /// Frames excluded because occlusion or prediction failed.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub label: String,
    pub kind: OccluderKind,
    pub points: Vec<CurvePoint>,
}

impl RobustnessCurve {
    pub fn point(&self, degree: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| degree_key(p.degree) == degree_key(degree))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub predictor: String,
    pub kind: OccluderKind,
    pub degree: f64,
    pub frame_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub curves: Vec<RobustnessCurve>,
    pub records: Vec<ErrorRecord>,
    pub failures: Vec<FrameFailure>,
}

impl SweepResult {
    pub fn curves_for(&self, label: &str) -> Vec<&RobustnessCurve> {
        self.curves.iter().filter(|c| c.label == label).collect()
    }
}

/// Seed for the occluders of one (frame, kind, degree) cell.
pub fn occlusion_seed(run_seed: u64, frame_id: u64, kind: OccluderKind, degree: f64) -> u64 {
    derive_seed(run_seed, kind.name(), &[frame_id, degree_key(degree)])
}

type CellOutcome = Result<Vec<f64>, String>;

fn evaluate(
    predictor: &dyn Predictor,
    lock: &Mutex<()>,
    frame: &EvalFrame,
    skeleton: &Skeleton,
    image: &RgbImage,
    masks: Option<&OccluderMaskSet>,
) -> CellOutcome {
    let input = PredictorInput {
        frame_id: frame.record.frame_id,
        crop: image,
        transform: &frame.transform,
        camera: &frame.record.camera,
        root_depth_mm: frame.record.root_depth(skeleton.root_index),
        skeleton,
        reference: ReferenceInfo { pose_gt: &frame.record.pose_gt, masks },
    };
    let out = if predictor.concurrent_safe() {
        predictor.predict(&input)
    } else {
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        predictor.predict(&input)
    };
    let pose = match out.map_err(|e| e.to_string())? {
        Prediction::Pose(p) => p,
        Prediction::Heatmap(h) => decode_pose(&h, &frame.transform, &frame.record.camera, input.root_depth_mm, skeleton.root_index)
            .map_err(|e| e.to_string())?,
    };
    per_joint_errors(&pose, &frame.record.pose_gt, skeleton.root_index).map_err(|e| e.to_string())
}

/// Runs one sweep for several predictors at once. Each frame's occluders are
/// generated once per (kind, degree) and shown to every predictor.
pub fn run_sweep(
    predictors: &[&dyn Predictor],
    dataset: &EvalDataset,
    config: &SweepConfig,
    library: Option<&ObjectLibrary>,
) -> Result<SweepResult, SweepError> {
    config.validate()?;
    if predictors.is_empty() {
        return Err(SweepError::InvalidConfig("at least one predictor is required".into()));
    }
    for (i, p) in predictors.iter().enumerate() {
        if predictors[..i].iter().any(|q| q.label() == p.label()) {
            return Err(SweepError::InvalidConfig(format!("duplicate predictor label {:?}", p.label())));
        }
    }
    if dataset.is_empty() {
        return Err(SweepError::InvalidConfig("dataset has no frames".into()));
    }
    if library.is_none() {
        if let Some(k) = config.kinds.iter().find(|k| k.needs_library()) {
            return Err(OcclusionError::LibraryRequired(*k).into());
        }
    }
    let generator = OcclusionGenerator::new(config.occluders.clone());
    let objects = library.map(|l| ObjectSource { library: l, split: config.object_split });
    let locks: Vec<Mutex<()>> = predictors.iter().map(|_| Mutex::new(())).collect();
    let skeleton = &dataset.skeleton;

    // per (kind, degree, frame): one outcome per predictor
    let run_cell = |kind: OccluderKind, degree: f64| -> Vec<Vec<CellOutcome>> {
        let eval_frame = |frame: &EvalFrame| -> Vec<CellOutcome> {
            let occluded = if degree_key(degree) == 0 {
                Ok((frame.crop.clone(), None))
            } else {
                let spec = OcclusionSpec { kind, target_degree: degree, seed: occlusion_seed(config.seed, frame.record.frame_id, kind, degree) };
                generator
                    .generate(&spec, &frame.bbox_crop, (dataset.crop_size, dataset.crop_size), objects, &mut spec.rng())
                    .and_then(|m| Ok((composite(&frame.crop, &m, library)?, Some(m))))
                    .map_err(|e| format!("occlusion: {e}"))
            };
            match occluded {
                Ok((image, masks)) => predictors
                    .iter()
                    .zip(&locks)
                    .map(|(p, lock)| evaluate(*p, lock, frame, skeleton, &image, masks.as_ref()))
                    .collect(),
                Err(e) => predictors.iter().map(|_| Err(e.clone())).collect(),
            }
        };
        dataset.frames.par_iter().map(eval_frame).collect()
    };

    let baseline = if config.degrees.iter().any(|&d| degree_key(d) == 0) {
        Some(run_cell(OccluderKind::None, 0.0))
    } else {
        None
    };

    let mut cells: Vec<(OccluderKind, f64, Vec<Vec<CellOutcome>>)> = Vec::new();
    for &kind in &config.kinds {
        for &degree in &config.degrees {
            let outcomes = match (&baseline, degree_key(degree)) {
                (Some(b), 0) => b.clone(),
                _ => run_cell(kind, degree),
            };
            cells.push((kind, degree, outcomes));
        }
    }

    let mut result = SweepResult::default();
    for (pi, p) in predictors.iter().enumerate() {
        for &kind in &config.kinds {
            let mut points = Vec::new();
            for (_, degree, outcomes) in cells.iter().filter(|c| c.0 == kind) {
                let mut values = Vec::new();
                let mut excluded = 0;
                for (frame, per_pred) in dataset.frames.iter().zip(outcomes) {
                    match &per_pred[pi] {
                        Ok(errors) => {
                            let rec = ErrorRecord::new(
                                frame.record.frame_id,
                                frame.record.action.clone(),
                                p.label(),
                                kind,
                                *degree,
                                errors.clone(),
                                skeleton.root_index,
                                config.include_root,
                            );
                            values.push(rec.mpjpe_mm);
                            result.records.push(rec);
                        }
                        Err(reason) => {
                            excluded += 1;
                            result.failures.push(FrameFailure {
                                predictor: p.label().to_string(),
                                kind,
                                degree: *degree,
                                frame_id: frame.record.frame_id,
                                reason: reason.clone(),
                            });
                        }
                    }
                }
                if !values.is_empty() {
                    let (mean_mm, std_mm) = mean_std(&values);
                    points.push(CurvePoint { degree: *degree, mean_mm, std_mm, n: values.len(), excluded });
                }
            }
            result.curves.push(RobustnessCurve { label: p.label().to_string(), kind, points });
        }
    }
    Ok(result)
}

/// Robustness curves of a single predictor.
pub fn run_degree_sweep(
    predictor: &dyn Predictor,
    dataset: &EvalDataset,
    config: &SweepConfig,
    library: Option<&ObjectLibrary>,
) -> Result<SweepResult, SweepError> {
    run_sweep(&[predictor], dataset, config, library)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTestMatrix {
    /// Predictor labels.
    pub rows: Vec<String>,
    /// Test occluder kinds.
    pub columns: Vec<OccluderKind>,
    /// `cells[row][column]`, mm.
    pub cells: Vec<Vec<f64>>,
    pub degrees: Vec<f64>,
}

impl TrainTestMatrix {
    pub fn cell(&self, row: &str, kind: OccluderKind) -> Option<f64> {
        let r = self.rows.iter().position(|l| l == row)?;
        let c = self.columns.iter().position(|&k| k == kind)?;
        Some(self.cells[r][c])
    }
}

/// Each cell is the unweighted mean of the per-degree means at
/// [`MATRIX_DEGREES`] for that predictor and kind.
pub fn matrix_from_curves(curves: &[RobustnessCurve]) -> Result<TrainTestMatrix, SweepError> {
    let mut rows: Vec<String> = Vec::new();
    let mut columns: Vec<OccluderKind> = Vec::new();
    for c in curves {
        if !rows.contains(&c.label) {
            rows.push(c.label.clone());
        }
        if !columns.contains(&c.kind) {
            columns.push(c.kind);
        }
    }
    if rows.is_empty() {
        return Err(SweepError::InvalidConfig("no curves to aggregate".into()));
    }
    let mut cells = vec![vec![f64::NAN; columns.len()]; rows.len()];
    for c in curves {
        let r = rows.iter().position(|l| *l == c.label).expect("row collected above");
        let k = columns.iter().position(|&k| k == c.kind).expect("column collected above");
        let mut sum = 0.0;
        for d in MATRIX_DEGREES {
            let p = c.point(d).ok_or_else(|| SweepError::MissingDegree { label: c.label.clone(), kind: c.kind, degree: d })?;
            sum += p.mean_mm;
        }
        cells[r][k] = sum / MATRIX_DEGREES.len() as f64;
    }
    if let Some((r, k)) = cells.iter().enumerate().find_map(|(r, row)| row.iter().position(|v| v.is_nan()).map(|k| (r, k))) {
        return Err(SweepError::MissingDegree { label: rows[r].clone(), kind: columns[k], degree: MATRIX_DEGREES[0] });
    }
    Ok(TrainTestMatrix { rows, columns, cells, degrees: MATRIX_DEGREES.to_vec() })
}

/// Sweeps every predictor over [`MATRIX_DEGREES`] and builds the matrix.
pub fn run_matrix(
    predictors: &[&dyn Predictor],
    dataset: &EvalDataset,
    kinds: &[OccluderKind],
    seed: u64,
    library: Option<&ObjectLibrary>,
) -> Result<(TrainTestMatrix, SweepResult), SweepError> {
    let config = SweepConfig { seed, kinds: kinds.to_vec(), degrees: MATRIX_DEGREES.to_vec(), ..SweepConfig::default() };
    let result = run_sweep(predictors, dataset, &config, library)?;
    Ok((matrix_from_curves(&result.curves)?, result))
}

#[cfg(test)]
mod tests;
