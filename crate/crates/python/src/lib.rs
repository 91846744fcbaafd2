//! Python bindings: cameras and crops, heatmap decoding, MPJPE, occlusion
//! generation and sweeps.

use std::path::PathBuf;

use ::occbench as core;
use core::datamodel::{generate_synthetic_dataset, load_manifest, write_dataset, Pose3D, SequenceManifest, SynthConfig};
use core::geometry::{self, BoundingBox, CameraIntrinsics, CropTransform};
use core::heatmap::{self, HeatmapShape, VolumetricHeatmap};
use core::metrics;
use core::occlusion::{self, ObjectLibrary, ObjectSource, OccluderKind, OccluderMaskSet, OcclusionSpec, Split};
use core::sweep::{self, EvalDataset, Predictor, ReferencePredictor, RobustnessCurve, SweepConfig};
use nalgebra::{Point2, Vector3};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Deserialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sweep_err(e: sweep::SweepError) -> PyErr {
    use sweep::SweepError::*;
    match e {
        Io(_) | Image { .. } => PyOSError::new_err(e.to_string()),
        InvalidConfig(_) | MissingDegree { .. } | Data(_) | Occlusion(_) => value_err(e),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn pose(joints: Vec<[f64; 3]>) -> PyResult<Pose3D> {
    Pose3D::new(joints.into_iter().map(Vector3::from).collect()).map_err(value_err)
}

fn joints(p: &Pose3D) -> Vec<[f64; 3]> {
    p.joints().iter().map(|j| [j.x, j.y, j.z]).collect()
}

fn kind(name: &str) -> PyResult<OccluderKind> {
    name.parse().map_err(value_err)
}

#[pyclass(name = "Camera", frozen, from_py_object)]
#[derive(Clone)]
struct PyCamera(CameraIntrinsics);

#[pymethods]
impl PyCamera {
    #[new]
    fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> PyResult<Self> {
        CameraIntrinsics::new(fx, fy, cx, cy, width, height).map(Self).map_err(value_err)
    }

    fn project(&self, point: [f64; 3]) -> PyResult<(f64, f64)> {
        let p = geometry::project(&self.0, &Vector3::from(point)).map_err(value_err)?;
        Ok((p.x, p.y))
    }

    fn backproject(&self, pixel: (f64, f64), depth_mm: f64) -> PyResult<[f64; 3]> {
        let p = geometry::backproject(&self.0, &Point2::new(pixel.0, pixel.1), depth_mm).map_err(value_err)?;
        Ok([p.x, p.y, p.z])
    }

    fn __repr__(&self) -> String {
        let k = &self.0;
        format!("Camera(fx={}, fy={}, cx={}, cy={}, width={}, height={})", k.fx, k.fy, k.cx, k.cy, k.width, k.height)
    }
}

#[pyclass(name = "BBox", frozen, get_all, from_py_object)]
#[derive(Clone)]
struct PyBBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl PyBBox {
    fn inner(&self) -> PyResult<BoundingBox> {
        BoundingBox::new(self.x, self.y, self.w, self.h).map_err(value_err)
    }
}

#[pymethods]
impl PyBBox {
    #[new]
    fn new(x: f64, y: f64, w: f64, h: f64) -> PyResult<Self> {
        BoundingBox::new(x, y, w, h).map_err(value_err)?;
        Ok(Self { x, y, w, h })
    }

    fn __repr__(&self) -> String {
        format!("BBox(x={}, y={}, w={}, h={})", self.x, self.y, self.w, self.h)
    }
}

#[pyclass(name = "CropTransform", frozen)]
struct PyCropTransform(CropTransform);

#[pymethods]
impl PyCropTransform {
    #[getter]
    fn crop_size(&self) -> u32 {
        self.0.crop_size()
    }

    /// Row-major 3x3 homography from source pixels to crop pixels.
    #[getter]
    fn homography(&self) -> [[f64; 3]; 3] {
        let h = self.0.homography();
        [0, 1, 2].map(|r| [h[(r, 0)], h[(r, 1)], h[(r, 2)]])
    }

    #[getter]
    fn rotation(&self) -> [[f64; 3]; 3] {
        let m = self.0.rotation();
        [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
    }

    fn warp_point(&self, p: (f64, f64)) -> PyResult<(f64, f64)> {
        let q = self.0.warp_point(&Point2::new(p.0, p.1)).map_err(value_err)?;
        Ok((q.x, q.y))
    }

    fn inverse_warp_point(&self, p: (f64, f64)) -> PyResult<(f64, f64)> {
        let q = self.0.inverse_warp_point(&Point2::new(p.0, p.1)).map_err(value_err)?;
        Ok((q.x, q.y))
    }
}

#[pyfunction]
#[pyo3(signature = (camera, bbox, crop_size = 256, coverage = 0.8))]
fn make_crop_transform(camera: &PyCamera, bbox: &PyBBox, crop_size: u32, coverage: f64) -> PyResult<PyCropTransform> {
    geometry::make_crop_transform(&camera.0, &bbox.inner()?, crop_size, coverage)
        .map(PyCropTransform)
        .map_err(value_err)
}

#[pyclass(name = "Heatmap", frozen)]
struct PyHeatmap(VolumetricHeatmap);

#[pymethods]
impl PyHeatmap {
    /// Scores in `(joint, depth, height, width)` row-major order.
    #[new]
    #[pyo3(signature = (scores, joints, depth = 16, height = 16, width = 16, crop_size = 256, depth_span_mm = 2000.0))]
    fn new(
        scores: Vec<f32>,
        joints: usize,
        depth: usize,
        height: usize,
        width: usize,
        crop_size: u32,
        depth_span_mm: f64,
    ) -> PyResult<Self> {
        let shape = HeatmapShape { depth, height, width, depth_span_mm };
        VolumetricHeatmap::new(joints, shape, scores, crop_size).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        heatmap::load_heatmap(&path).map(Self).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        heatmap::save_heatmap(&self.0, &path).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    #[getter]
    fn num_joints(&self) -> usize {
        self.0.num_joints()
    }

    /// Expected voxel coordinate `(d, h, w)` of each joint.
    fn soft_argmax(&self) -> Vec<(f64, f64, f64)> {
        heatmap::soft_argmax(&self.0).into_iter().map(|c| (c.d, c.h, c.w)).collect()
    }

    #[pyo3(signature = (transform, camera, root_depth_mm, root_index = 0))]
    fn decode_pose(&self, transform: &PyCropTransform, camera: &PyCamera, root_depth_mm: f64, root_index: usize) -> PyResult<Vec<[f64; 3]>> {
        let p = heatmap::decode_pose(&self.0, &transform.0, &camera.0, root_depth_mm, root_index).map_err(value_err)?;
        Ok(joints(&p))
    }
}

#[pyfunction]
#[pyo3(signature = (pose, transform, camera, root_depth_mm, sigma_voxels = 1.0))]
fn encode_gaussian(pose: Vec<[f64; 3]>, transform: &PyCropTransform, camera: &PyCamera, root_depth_mm: f64, sigma_voxels: f64) -> PyResult<PyHeatmap> {
    heatmap::encode_gaussian(&self::pose(pose)?, &transform.0, &camera.0, root_depth_mm, sigma_voxels, HeatmapShape::default())
        .map(PyHeatmap)
        .map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, root_index = 0, include_root = true))]
fn mpjpe(pred: Vec<[f64; 3]>, gt: Vec<[f64; 3]>, root_index: usize, include_root: bool) -> PyResult<f64> {
    metrics::mpjpe(&pose(pred)?, &pose(gt)?, root_index, include_root).map_err(value_err)
}

#[pyclass(name = "ObjectLibrary", frozen)]
struct PyObjectLibrary(ObjectLibrary);

#[pymethods]
impl PyObjectLibrary {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ObjectLibrary::load(&path).map(Self).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    #[staticmethod]
    #[pyo3(signature = (train = 24, test = 24, size = 64, seed = 0))]
    fn synthetic(train: usize, test: usize, size: u32, seed: u64) -> Self {
        Self(ObjectLibrary::synthetic(train, test, size, seed))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.0.entries().len()
    }
}

#[pyclass(name = "MaskSet", frozen)]
struct PyMaskSet(OccluderMaskSet);

#[pymethods]
impl PyMaskSet {
    /// Kind actually drawn; for mixtures, the sampled member.
    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind.name()
    }

    fn __len__(&self) -> usize {
        self.0.masks.len()
    }

    /// `(occluded_fraction, occluded_pixels, bbox_pixels)` over `bbox`.
    fn measure(&self, bbox: &PyBBox) -> PyResult<(f64, u64, u64)> {
        let m = occlusion::measure_degree(&self.0, &bbox.inner()?);
        Ok((m.occluded_fraction, m.occluded_pixel_count, m.bbox_pixel_count))
    }

    /// Combined alpha of all masks as `height` rows of `width` bytes.
    fn alpha(&self, width: u32, height: u32) -> Vec<Vec<u8>> {
        (0..height as i32)
            .map(|y| {
                (0..width as i32)
                    .map(|x| {
                        let t: f64 = self.0.masks.iter().map(|m| 1.0 - m.alpha_at(x, y) as f64 / 255.0).product();
                        (255.0 * (1.0 - t)).round() as u8
                    })
                    .collect()
            })
            .collect()
    }
}

/// Occluders over `bbox` on a `canvas = (width, height)` image, calibrated to
/// cover `degree` of the box.
#[pyfunction]
#[pyo3(signature = (kind, degree, seed, bbox, canvas, library = None, split = "test"))]
fn generate_occlusion(
    kind: &str,
    degree: f64,
    seed: u64,
    bbox: &PyBBox,
    canvas: (u32, u32),
    library: Option<&PyObjectLibrary>,
    split: &str,
) -> PyResult<PyMaskSet> {
    let spec = OcclusionSpec::new(self::kind(kind)?, degree, seed).map_err(value_err)?;
    let split: Split = split.parse().map_err(value_err)?;
    let objects = library.map(|l| ObjectSource { library: &l.0, split });
    occlusion::generate(&spec, &bbox.inner()?, canvas, objects, &mut spec.rng())
        .map(PyMaskSet)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyclass(name = "Manifest", frozen)]
struct PyManifest(SequenceManifest);

#[pymethods]
impl PyManifest {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_manifest(&path).map(Self).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn frame_ids(&self) -> Vec<u64> {
        self.0.frames.iter().map(|f| f.frame_id).collect()
    }

    #[getter]
    fn joint_names(&self) -> Vec<String> {
        self.0.skeleton.joint_names.clone()
    }

    fn pose(&self, index: usize) -> PyResult<Vec<[f64; 3]>> {
        let f = self.0.frames.get(index).ok_or_else(|| value_err(format!("frame index {index} out of range")))?;
        Ok(joints(&f.pose_gt))
    }

    fn camera(&self, index: usize) -> PyResult<PyCamera> {
        let f = self.0.frames.get(index).ok_or_else(|| value_err(format!("frame index {index} out of range")))?;
        Ok(PyCamera(f.camera))
    }

    fn bbox(&self, index: usize) -> PyResult<PyBBox> {
        let f = self.0.frames.get(index).ok_or_else(|| value_err(format!("frame index {index} out of range")))?;
        Ok(PyBBox { x: f.bbox.x, y: f.bbox.y, w: f.bbox.w, h: f.bbox.h })
    }
}

/// Renders a synthetic dataset under `out` and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (frames, seed, out, image_size = 256))]
fn synth_data(frames: usize, seed: u64, out: PathBuf, image_size: u32) -> PyResult<PathBuf> {
    let config = SynthConfig { num_frames: frames, image_size, seed, ..SynthConfig::default() };
    let data = generate_synthetic_dataset(&config).map_err(value_err)?;
    write_dataset(&data, &out).map_err(|e| PyOSError::new_err(e.to_string()))
}

#[pyclass(name = "Curve", frozen, get_all)]
struct PyCurve {
    label: String,
    kind: String,
    degrees: Vec<f64>,
    mean_mm: Vec<f64>,
    std_mm: Vec<f64>,
    n: Vec<usize>,
}

impl From<&RobustnessCurve> for PyCurve {
    fn from(c: &RobustnessCurve) -> Self {
        Self {
            label: c.label.clone(),
            kind: c.kind.name().into(),
            degrees: c.points.iter().map(|p| p.degree).collect(),
            mean_mm: c.points.iter().map(|p| p.mean_mm).collect(),
            std_mm: c.points.iter().map(|p| p.std_mm).collect(),
            n: c.points.iter().map(|p| p.n).collect(),
        }
    }
}

#[pymethods]
impl PyCurve {
    fn __repr__(&self) -> String {
        format!("Curve(label={:?}, kind={:?}, points={})", self.label, self.kind, self.degrees.len())
    }
}

#[derive(Deserialize)]
struct PredictorEntry {
    #[serde(default)]
    label: Option<String>,
    #[serde(flatten)]
    spec: ReferencePredictor,
}

/// Predictor dicts such as `{"type": "occlusion_mock", "base_mm": 40,
/// "sensitivity_mm": 200, "label": "A"}`.
fn predictors(py: Python<'_>, specs: Vec<Bound<'_, PyAny>>, seed: u64, crop_size: u32, coverage: f64) -> PyResult<Vec<Box<dyn Predictor>>> {
    let json = py.import("json")?;
    specs
        .iter()
        .map(|s| {
            let text: String = json.call_method1("dumps", (s,))?.extract()?;
            let e: PredictorEntry = serde_json::from_str(&text).map_err(value_err)?;
            let label = e.label.unwrap_or_else(|| e.spec.default_label());
            let pseed = core::seed::derive_seed(seed, &format!("predictor/{label}"), &[]);
            sweep::make_reference_predictor(&e.spec, Some(label), pseed, crop_size, coverage).map_err(sweep_err)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn sweep_curves(
    py: Python<'_>,
    manifest: PathBuf,
    specs: Vec<Bound<'_, PyAny>>,
    seed: u64,
    kinds: Option<Vec<String>>,
    degrees: Vec<f64>,
    library: Option<&PyObjectLibrary>,
    crop_size: u32,
    coverage: f64,
    include_root: bool,
) -> PyResult<Vec<RobustnessCurve>> {
    let kinds = match kinds {
        Some(k) => k.iter().map(|s| kind(s)).collect::<PyResult<Vec<_>>>()?,
        None => OccluderKind::ALL.into_iter().filter(|k| library.is_some() || !k.needs_library()).collect(),
    };
    let preds = predictors(py, specs, seed, crop_size, coverage)?;
    let refs: Vec<&dyn Predictor> = preds.iter().map(|p| p.as_ref()).collect();
    let config = SweepConfig { seed, kinds, degrees, include_root, ..SweepConfig::default() };
    let lib = library.map(|l| &l.0);
    py.detach(|| {
        let dataset = EvalDataset::load(&manifest, crop_size, coverage)?;
        sweep::run_sweep(&refs, &dataset, &config, lib).map(|r| r.curves)
    })
    .map_err(sweep_err)
}

/// Robustness curves for every predictor and kind. Kinds default to all
/// kinds the library (or its absence) allows; degrees to 0 to 0.7 by 0.1.
#[pyfunction]
#[pyo3(signature = (manifest, predictors, seed, kinds = None, degrees = None, library = None, crop_size = 256, coverage = 0.8, include_root = true))]
#[allow(clippy::too_many_arguments)]
fn run_sweep(
    py: Python<'_>,
    manifest: PathBuf,
    predictors: Vec<Bound<'_, PyAny>>,
    seed: u64,
    kinds: Option<Vec<String>>,
    degrees: Option<Vec<f64>>,
    library: Option<&PyObjectLibrary>,
    crop_size: u32,
    coverage: f64,
    include_root: bool,
) -> PyResult<Vec<PyCurve>> {
    let degrees = degrees.unwrap_or_else(|| sweep::degree_grid(0.1, occlusion::MAX_DEGREE));
    let curves = sweep_curves(py, manifest, predictors, seed, kinds, degrees, library, crop_size, coverage, include_root)?;
    Ok(curves.iter().map(PyCurve::from).collect())
}

type MatrixTuple = (Vec<String>, Vec<String>, Vec<Vec<f64>>);

/// Train x test matrix: `(rows, columns, cells)` with each cell the mean
/// over degrees 0.1 to 0.5.
#[pyfunction]
#[pyo3(signature = (manifest, predictors, seed, kinds = None, library = None, crop_size = 256, coverage = 0.8))]
#[allow(clippy::too_many_arguments)]
fn run_matrix(
    py: Python<'_>,
    manifest: PathBuf,
    predictors: Vec<Bound<'_, PyAny>>,
    seed: u64,
    kinds: Option<Vec<String>>,
    library: Option<&PyObjectLibrary>,
    crop_size: u32,
    coverage: f64,
) -> PyResult<MatrixTuple> {
    let degrees = sweep::MATRIX_DEGREES.to_vec();
    let curves = sweep_curves(py, manifest, predictors, seed, kinds, degrees, library, crop_size, coverage, true)?;
    let m = sweep::matrix_from_curves(&curves).map_err(sweep_err)?;
    Ok((m.rows, m.columns.iter().map(|k| k.name().to_string()).collect(), m.cells))
}

#[pyfunction]
fn derive_seed(base: u64, label: &str, coords: Vec<u64>) -> u64 {
    core::seed::derive_seed(base, label, &coords)
}

#[pyfunction]
#[pyo3(signature = (step = 0.1, max = 0.7))]
fn degree_grid(step: f64, max: f64) -> Vec<f64> {
    sweep::degree_grid(step, max)
}

#[pymodule]
fn occbench(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCamera>()?;
    m.add_class::<PyBBox>()?;
    m.add_class::<PyCropTransform>()?;
    m.add_class::<PyHeatmap>()?;
    m.add_class::<PyObjectLibrary>()?;
    m.add_class::<PyMaskSet>()?;
    m.add_class::<PyManifest>()?;
    m.add_class::<PyCurve>()?;
    m.add_function(wrap_pyfunction!(make_crop_transform, m)?)?;
    m.add_function(wrap_pyfunction!(encode_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(mpjpe, m)?)?;
    m.add_function(wrap_pyfunction!(generate_occlusion, m)?)?;
    m.add_function(wrap_pyfunction!(synth_data, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(degree_grid, m)?)?;
    m.add("OCCLUDER_KINDS", OccluderKind::ALL.map(|k| k.name()).to_vec())?;
    m.add("MATRIX_DEGREES", sweep::MATRIX_DEGREES.to_vec())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
