//! Synthetic occluders calibrated to a target degree of occlusion.
//!
//! The degree of occlusion is the fraction of pixels inside the person's
//! bounding box that are covered by occluders. Every generator samples a
//! random layout at unit scale and then searches for the scale at which the
//! measured degree meets the target, so all occluder families share the same
//! distribution of occluded-pixel counts.
//!
//! All coordinates are crop pixels; pixel `(i, j)` is covered by a shape when
//! its centre `(i + 0.5, j + 0.5)` lies inside it.

mod cache;
mod calibrate;
mod library;
mod shapes;

pub use cache::{load_mask_set, save_mask_set};
pub use calibrate::{calibrate_distributions, CalibrationCell, CalibrationFlag, CalibrationReport};
pub use library::{ObjectEntry, ObjectLibrary, Split};

use std::fmt;
use std::str::FromStr;

use image::{Rgb, RgbImage, RgbaImage};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundingBox;
use shapes::Shape;

/// Largest degree of occlusion a spec may request.
pub const MAX_DEGREE: f64 = 0.7;
/// Accepted absolute deviation between measured and target degree.
pub const DEGREE_TOLERANCE: f64 = 0.02;
/// Alpha at or above which a pixel counts as occluded.
pub const ALPHA_THRESHOLD: u8 = 128;
/// Bisection steps spent refining the scale of one layout.
pub const MAX_CALIBRATION_ITERS: usize = 20;
/// Fresh layouts tried before a target is declared unreachable.
pub const MAX_LAYOUT_ATTEMPTS: usize = 12;
/// The scale search stops early once this close to the target.
const REFINE_TOLERANCE: f64 = 0.002;

#[derive(Debug, Error)]
pub enum OcclusionError {
    #[error("invalid occlusion spec: {0}")]
    InvalidSpec(String),
    #[error("occluder kind {0} requires an object library")]
    LibraryRequired(OccluderKind),
    #[error("object library: {0}")]
    Library(String),
    #[error("object {0:?} is not in the library")]
    MissingObject(String),
    #[error("target degree {target} unreachable for {kind} after {attempts} layouts (closest {closest:.4})")]
    Unreachable {
        kind: OccluderKind,
        target: f64,
        attempts: usize,
        closest: f64,
    },
    #[error("mask cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderKind {
    None,
    Circles,
    SingleRectangle,
    Rectangles,
    Bars,
    Objects,
    Mixture,
}

impl OccluderKind {
    /// Families the mixture strategy draws from.
    pub const BASE: [OccluderKind; 5] = [
        OccluderKind::Circles,
        OccluderKind::SingleRectangle,
        OccluderKind::Rectangles,
        OccluderKind::Bars,
        OccluderKind::Objects,
    ];

    /// Every kind that produces occluders.
    pub const ALL: [OccluderKind; 6] = [
        OccluderKind::Circles,
        OccluderKind::SingleRectangle,
        OccluderKind::Rectangles,
        OccluderKind::Bars,
        OccluderKind::Objects,
        OccluderKind::Mixture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OccluderKind::None => "none",
            OccluderKind::Circles => "circles",
            OccluderKind::SingleRectangle => "single_rectangle",
            OccluderKind::Rectangles => "rectangles",
            OccluderKind::Bars => "bars",
            OccluderKind::Objects => "objects",
            OccluderKind::Mixture => "mixture",
        }
    }

    pub fn needs_library(self) -> bool {
        matches!(self, OccluderKind::Objects | OccluderKind::Mixture)
    }
}

impl fmt::Display for OccluderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OccluderKind {
    type Err = OcclusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        [OccluderKind::None].iter().chain(OccluderKind::ALL.iter()).copied()
            .find(|k| k.name() == norm)
            .ok_or_else(|| OcclusionError::InvalidSpec(format!("unknown occluder kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionSpec {
    pub kind: OccluderKind,
    pub target_degree: f64,
    pub seed: u64,
}

impl OcclusionSpec {
    pub fn new(kind: OccluderKind, target_degree: f64, seed: u64) -> Result<Self, OcclusionError> {
        let s = Self { kind, target_degree, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), OcclusionError> {
        if !(0.0..=MAX_DEGREE).contains(&self.target_degree) {
            return Err(OcclusionError::InvalidSpec(format!(
                "target degree {} outside [0, {MAX_DEGREE}]",
                self.target_degree
            )));
        }
        if self.kind == OccluderKind::None && self.target_degree > 0.0 {
            return Err(OcclusionError::InvalidSpec("kind none cannot reach a positive degree".into()));
        }
        Ok(())
    }

    /// The generator stream owned by this spec.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    SolidBlack,
    ObjectTexture,
}

/// Where a pasted object's full bitmap sits on the canvas, before clipping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectPlacement {
    /// Index into [`OccluderMaskSet::source_ids`].
    pub source: usize,
    pub x: i32,
    pub y: i32,
    pub width: u32,
    pub height: u32,
}

impl ObjectPlacement {
    /// Nearest-neighbour source pixel for canvas pixel `(x, y)`.
    pub fn source_pixel(&self, x: i32, y: i32, src_w: u32, src_h: u32) -> (u32, u32) {
        let u = ((x - self.x) as f64 + 0.5) * src_w as f64 / self.width as f64;
        let v = ((y - self.y) as f64 + 0.5) * src_h as f64 / self.height as f64;
        ((u as u32).min(src_w - 1), (v as u32).min(src_h - 1))
    }
}

/// An 8-bit alpha bitmap anchored at an integer top-left canvas position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub x: i32,
    pub y: i32,
    pub width: u32,
    pub height: u32,
    pub alpha: Vec<u8>,
    pub object: Option<ObjectPlacement>,
}

impl Mask {
    fn from_alpha_fn(
        x0: i32,
        y0: i32,
        x1: i32,
        y1: i32,
        object: Option<ObjectPlacement>,
        f: impl Fn(i32, i32) -> u8,
    ) -> Option<Self> {
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        let (width, height) = ((x1 - x0) as u32, (y1 - y0) as u32);
        let mut alpha = Vec::with_capacity((width * height) as usize);
        for y in y0..y1 {
            for x in x0..x1 {
                alpha.push(f(x, y));
            }
        }
        Some(Self { x: x0, y: y0, width, height, alpha, object })
    }

    fn from_fn(
        x0: i32,
        y0: i32,
        x1: i32,
        y1: i32,
        object: Option<ObjectPlacement>,
        inside: impl Fn(i32, i32) -> bool,
    ) -> Option<Self> {
        Self::from_alpha_fn(x0, y0, x1, y1, object, |x, y| if inside(x, y) { 255 } else { 0 })
    }

    /// A solid rectangle of canvas pixels `[x, x + width) × [y, y + height)`.
    pub fn rectangle(x: i32, y: i32, width: u32, height: u32) -> Self {
        Self { x, y, width, height, alpha: vec![255; (width * height) as usize], object: None }
    }

    /// Restricts the mask to the canvas; `None` when nothing remains.
    pub fn clipped(self, canvas: (u32, u32)) -> Option<Self> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.width as i32).min(canvas.0 as i32);
        let y1 = (self.y + self.height as i32).min(canvas.1 as i32);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        if (x0, y0, x1, y1) == (self.x, self.y, self.x + self.width as i32, self.y + self.height as i32) {
            return Some(self);
        }
        Self::from_alpha_fn(x0, y0, x1, y1, self.object, |x, y| self.alpha_at(x, y))
    }

    /// Alpha at a canvas pixel; zero outside the mask.
    pub fn alpha_at(&self, x: i32, y: i32) -> u8 {
        let (dx, dy) = (x - self.x, y - self.y);
        if dx < 0 || dy < 0 || dx >= self.width as i32 || dy >= self.height as i32 {
            0
        } else {
            self.alpha[(dy as u32 * self.width + dx as u32) as usize]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccluderMaskSet {
    /// The family actually generated; for mixtures, the sampled member.
    pub kind: OccluderKind,
    pub fill: Fill,
    pub masks: Vec<Mask>,
    /// Object-library ids referenced by [`ObjectPlacement::source`].
    pub source_ids: Vec<String>,
}

impl OccluderMaskSet {
    pub fn empty(kind: OccluderKind) -> Self {
        Self { kind, fill: Fill::SolidBlack, masks: Vec::new(), source_ids: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeMeasurement {
    pub occluded_fraction: f64,
    pub occluded_pixel_count: u64,
    pub bbox_pixel_count: u64,
}

/// Pixels whose centres fall inside a box: columns `[x0, x1)`, rows `[y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl PixelRect {
    pub fn of_bbox(b: &BoundingBox) -> Self {
        let lo = |v: f64| (v - 0.5).ceil() as i32;
        Self { x0: lo(b.x).max(0), y0: lo(b.y).max(0), x1: lo(b.x + b.w).max(0), y1: lo(b.y + b.h).max(0) }
    }

    pub fn width(&self) -> u32 {
        (self.x1 - self.x0).max(0) as u32
    }

    pub fn height(&self) -> u32 {
        (self.y1 - self.y0).max(0) as u32
    }

    pub fn count(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }
}

/// Per-pixel transmittance over a box, composed "over" across masks.
pub(crate) struct Coverage {
    rect: PixelRect,
    transmittance: Vec<f32>,
}

impl Coverage {
    pub fn new(rect: PixelRect) -> Self {
        Self { rect, transmittance: vec![1.0; rect.count() as usize] }
    }

    pub fn add(&mut self, m: &Mask) {
        let r = self.rect;
        let x0 = m.x.max(r.x0);
        let x1 = (m.x + m.width as i32).min(r.x1);
        let y0 = m.y.max(r.y0);
        let y1 = (m.y + m.height as i32).min(r.y1);
        for y in y0..y1 {
            let row = ((y - r.y0) as u32 * r.width()) as usize;
            let mrow = ((y - m.y) as u32 * m.width) as usize;
            for x in x0..x1 {
                let a = m.alpha[mrow + (x - m.x) as usize];
                if a > 0 {
                    self.transmittance[row + (x - r.x0) as usize] *= 1.0 - a as f32 / 255.0;
                }
            }
        }
    }

    pub fn occluded(&self) -> u64 {
        let limit = 1.0 - ALPHA_THRESHOLD as f32 / 255.0;
        self.transmittance.iter().filter(|&&t| t <= limit).count() as u64
    }
}

/// Occluded fraction of the box's pixels under the union of all masks.
pub fn measure_degree(masks: &OccluderMaskSet, bbox: &BoundingBox) -> DegreeMeasurement {
    let rect = PixelRect::of_bbox(bbox);
    let mut cov = Coverage::new(rect);
    for m in &masks.masks {
        cov.add(m);
    }
    let occluded = cov.occluded();
    let total = rect.count();
    DegreeMeasurement {
        occluded_fraction: if total == 0 { 0.0 } else { occluded as f64 / total as f64 },
        occluded_pixel_count: occluded,
        bbox_pixel_count: total,
    }
}

/// Layout parameters of the occluder families. None of these are fixed by
/// the degree definition; they only shape the layouts before calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OccluderConfig {
    pub circle_count: (u32, u32),
    /// Radius range as a fraction of the shorter box side, before scaling.
    pub circle_radius: (f64, f64),
    pub rectangle_count: (u32, u32),
    pub rectangle_aspect: (f64, f64),
    /// Single-rectangle area ratio range relative to the box area.
    pub erasing_area: (f64, f64),
    pub erasing_aspect: (f64, f64),
    pub bar_count: (u32, u32),
    /// Bar width range as a fraction of the box diagonal.
    pub bar_width: (f64, f64),
    pub bar_length: (f64, f64),
    /// Orientation range, degrees.
    pub bar_angle_deg: (f64, f64),
    pub object_count: (u32, u32),
    /// Object size range (larger side) as a fraction of the larger box side.
    pub object_size: (f64, f64),
}

impl Default for OccluderConfig {
    fn default() -> Self {
        Self {
            circle_count: (1, 8),
            circle_radius: (0.05, 0.15),
            rectangle_count: (1, 8),
            rectangle_aspect: (0.3, 1.0 / 0.3),
            erasing_area: (0.02, 0.4),
            erasing_aspect: (0.3, 1.0 / 0.3),
            bar_count: (1, 8),
            bar_width: (0.02, 0.08),
            bar_length: (0.3, 1.0),
            bar_angle_deg: (0.0, 180.0),
            object_count: (1, 3),
            object_size: (0.3, 0.6),
        }
    }
}

/// Object entries available to the generator: one split of a library.
#[derive(Debug, Clone, Copy)]
pub struct ObjectSource<'a> {
    pub library: &'a ObjectLibrary,
    pub split: Split,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn count<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (u32, u32)) -> u32 {
    rng.random_range(lo..=hi.max(lo))
}

fn centre<R: Rng + ?Sized>(rng: &mut R, b: &BoundingBox) -> (f64, f64) {
    (b.x + uniform(rng, (0.0, b.w)), b.y + uniform(rng, (0.0, b.h)))
}

/// Log-uniform aspect ratio, symmetric in `a` and `1/a`.
fn aspect<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    uniform(rng, (lo.ln(), hi.ln())).exp()
}

impl OccluderConfig {
    fn layout<R: Rng + ?Sized>(&self, kind: OccluderKind, b: &BoundingBox, objects: &[&RgbaImage], rng: &mut R) -> Vec<Shape> {
        match kind {
            OccluderKind::Circles => (0..count(rng, self.circle_count))
                .map(|_| {
                    let (cx, cy) = centre(rng, b);
                    Shape::Disk { cx, cy, r: uniform(rng, self.circle_radius) * b.w.min(b.h) }
                })
                .collect(),
            OccluderKind::Rectangles => (0..count(rng, self.rectangle_count))
                .map(|_| {
                    let (cx, cy) = centre(rng, b);
                    let a = aspect(rng, self.rectangle_aspect);
                    let side = uniform(rng, (0.08, 0.22)) * (b.w * b.h).sqrt();
                    Shape::Rect { cx, cy, half_w: side * a.sqrt() / 2.0, half_h: side / a.sqrt() / 2.0, angle: 0.0 }
                })
                .collect(),
            OccluderKind::SingleRectangle => vec![self.random_erasing(b, rng)],
            OccluderKind::Bars => {
                let diag = (b.w * b.w + b.h * b.h).sqrt();
                (0..count(rng, self.bar_count))
                    .map(|_| {
                        let (cx, cy) = centre(rng, b);
                        let width = uniform(rng, self.bar_width) * diag;
                        let length = uniform(rng, self.bar_length) * diag;
                        let angle = uniform(rng, self.bar_angle_deg).to_radians();
                        Shape::Rect { cx, cy, half_w: length / 2.0, half_h: width / 2.0, angle }
                    })
                    .collect()
            }
            OccluderKind::Objects => (0..count(rng, self.object_count))
                .map(|_| {
                    let entry = rng.random_range(0..objects.len());
                    let img = objects[entry];
                    let (cx, cy) = centre(rng, b);
                    let size = uniform(rng, self.object_size) * b.w.max(b.h);
                    let (iw, ih) = (img.width() as f64, img.height() as f64);
                    let s = size / iw.max(ih);
                    Shape::Object { cx, cy, w: iw * s, h: ih * s, entry }
                })
                .collect(),
            OccluderKind::None | OccluderKind::Mixture => Vec::new(),
        }
    }

    /// Random-erasing rectangle: area ratio and aspect drawn until the
    /// rectangle fits inside the box, placed uniformly within it.
    fn random_erasing<R: Rng + ?Sized>(&self, b: &BoundingBox, rng: &mut R) -> Shape {
        for _ in 0..100 {
            let area = uniform(rng, self.erasing_area) * b.w * b.h;
            let r = uniform(rng, self.erasing_aspect);
            let (he, we) = ((area * r).sqrt(), (area / r).sqrt());
            if we < b.w && he < b.h {
                let x = b.x + uniform(rng, (0.0, b.w - we));
                let y = b.y + uniform(rng, (0.0, b.h - he));
                return Shape::Rect { cx: x + we / 2.0, cy: y + he / 2.0, half_w: we / 2.0, half_h: he / 2.0, angle: 0.0 };
            }
        }
        let c = b.center();
        Shape::Rect { cx: c.x, cy: c.y, half_w: b.w / 4.0, half_h: b.h / 4.0, angle: 0.0 }
    }
}

fn rasterize_all(shapes: &[Shape], scale: f64, objects: &[&RgbaImage], canvas: (u32, u32)) -> Vec<Mask> {
    shapes.iter().filter_map(|s| s.rasterize(scale, objects, canvas)).collect()
}

fn degree_at(shapes: &[Shape], scale: f64, objects: &[&RgbaImage], canvas: (u32, u32), rect: PixelRect) -> f64 {
    let mut cov = Coverage::new(rect);
    for m in rasterize_all(shapes, scale, objects, canvas) {
        cov.add(&m);
    }
    cov.occluded() as f64 / rect.count() as f64
}

/// Finds the layout scale whose degree is closest to `target`; returns the
/// scale and the degree reached.
fn calibrate_scale(shapes: &[Shape], objects: &[&RgbaImage], canvas: (u32, u32), rect: PixelRect, target: f64) -> (f64, f64) {
    let eval = |s: f64| degree_at(shapes, s, objects, canvas, rect);
    let mut best = (0.0, eval(0.0));
    let consider = |s: f64, d: f64, best: &mut (f64, f64)| {
        if (d - target).abs() < (best.1 - target).abs() {
            *best = (s, d);
        }
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut d_hi = eval(hi);
    consider(hi, d_hi, &mut best);
    let mut doublings = 0;
    while d_hi < target && doublings < 16 {
        lo = hi;
        hi *= 2.0;
        d_hi = eval(hi);
        consider(hi, d_hi, &mut best);
        doublings += 1;
    }
    if d_hi < target {
        return best;
    }
    for _ in 0..MAX_CALIBRATION_ITERS {
        if (best.1 - target).abs() <= REFINE_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let d = eval(mid);
        consider(mid, d, &mut best);
        if d < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

/// Occluder generator with configurable layout parameters.
#[derive(Debug, Clone, Default)]
pub struct OcclusionGenerator {
    pub config: OccluderConfig,
}

impl OcclusionGenerator {
    pub fn new(config: OccluderConfig) -> Self {
        Self { config }
    }

    /// Generates occluders over `bbox` (crop coordinates) on a canvas of
    /// `canvas` pixels, drawing all randomness from `rng`.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        spec: &OcclusionSpec,
        bbox: &BoundingBox,
        canvas: (u32, u32),
        objects: Option<ObjectSource<'_>>,
        rng: &mut R,
    ) -> Result<OccluderMaskSet, OcclusionError> {
        spec.validate()?;
        bbox.validate().map_err(|e| OcclusionError::InvalidSpec(e.to_string()))?;
        if bbox.x < 0.0 || bbox.y < 0.0 || bbox.x + bbox.w > canvas.0 as f64 || bbox.y + bbox.h > canvas.1 as f64 {
            return Err(OcclusionError::InvalidSpec("bounding box extends beyond the canvas".into()));
        }
        if spec.target_degree == 0.0 {
            return Ok(OccluderMaskSet::empty(spec.kind));
        }
        if spec.kind.needs_library() && objects.is_none() {
            return Err(OcclusionError::LibraryRequired(spec.kind));
        }
        let kind = if spec.kind == OccluderKind::Mixture {
            OccluderKind::BASE[rng.random_range(0..OccluderKind::BASE.len())]
        } else {
            spec.kind
        };

        let (images, ids): (Vec<&RgbaImage>, Vec<String>) = match (kind, objects) {
            (OccluderKind::Objects, Some(src)) => src
                .library
                .split_indices(src.split)
                .into_iter()
                .map(|i| {
                    let e = &src.library.entries()[i];
                    (&e.image, e.id.clone())
                })
                .unzip(),
            _ => (Vec::new(), Vec::new()),
        };
        if kind == OccluderKind::Objects && images.is_empty() {
            return Err(OcclusionError::Unreachable { kind, target: spec.target_degree, attempts: 0, closest: 0.0 });
        }

        let rect = PixelRect::of_bbox(bbox);
        if rect.count() == 0 {
            return Err(OcclusionError::InvalidSpec("bounding box contains no pixel centres".into()));
        }
        let mut closest = 0.0f64;
        for _ in 0..MAX_LAYOUT_ATTEMPTS {
            let shapes = self.config.layout(kind, bbox, &images, rng);
            let (scale, degree) = calibrate_scale(&shapes, &images, canvas, rect, spec.target_degree);
            if (degree - spec.target_degree).abs() < (closest - spec.target_degree).abs() {
                closest = degree;
            }
            if (degree - spec.target_degree).abs() <= DEGREE_TOLERANCE {
                return Ok(self.finish(kind, rasterize_all(&shapes, scale, &images, canvas), &ids));
            }
        }
        Err(OcclusionError::Unreachable { kind, target: spec.target_degree, attempts: MAX_LAYOUT_ATTEMPTS, closest })
    }

    fn finish(&self, kind: OccluderKind, mut masks: Vec<Mask>, ids: &[String]) -> OccluderMaskSet {
        if kind != OccluderKind::Objects {
            return OccluderMaskSet { kind, fill: Fill::SolidBlack, masks, source_ids: Vec::new() };
        }
        // Keep only the ids actually used, renumbered in order of appearance.
        let mut used: Vec<usize> = Vec::new();
        for m in &mut masks {
            if let Some(p) = m.object.as_mut() {
                let local = used.iter().position(|&u| u == p.source).unwrap_or_else(|| {
                    used.push(p.source);
                    used.len() - 1
                });
                p.source = local;
            }
        }
        OccluderMaskSet {
            kind,
            fill: Fill::ObjectTexture,
            masks,
            source_ids: used.into_iter().map(|i| ids[i].clone()).collect(),
        }
    }
}

/// [`OcclusionGenerator::generate`] with default layout parameters.
pub fn generate<R: Rng + ?Sized>(
    spec: &OcclusionSpec,
    bbox: &BoundingBox,
    canvas: (u32, u32),
    objects: Option<ObjectSource<'_>>,
    rng: &mut R,
) -> Result<OccluderMaskSet, OcclusionError> {
    OcclusionGenerator::default().generate(spec, bbox, canvas, objects, rng)
}

/// Generates from the spec's own seed.
pub fn generate_seeded(
    spec: &OcclusionSpec,
    bbox: &BoundingBox,
    canvas: (u32, u32),
    objects: Option<ObjectSource<'_>>,
) -> Result<OccluderMaskSet, OcclusionError> {
    generate(spec, bbox, canvas, objects, &mut spec.rng())
}

/// Paints the occluders over the image: black for solid fills, the object's
/// colours alpha-blended for object fills.
pub fn composite(image: &RgbImage, masks: &OccluderMaskSet, library: Option<&ObjectLibrary>) -> Result<RgbImage, OcclusionError> {
    let mut out = image.clone();
    let (w, h) = (image.width() as i32, image.height() as i32);
    let sources: Vec<&RgbaImage> = masks
        .source_ids
        .iter()
        .map(|id| {
            library
                .and_then(|l| l.get(id))
                .map(|e| &e.image)
                .ok_or_else(|| OcclusionError::MissingObject(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    for m in &masks.masks {
        for y in m.y.max(0)..(m.y + m.height as i32).min(h) {
            for x in m.x.max(0)..(m.x + m.width as i32).min(w) {
                let a = m.alpha_at(x, y);
                if a == 0 {
                    continue;
                }
                let a = a as f64 / 255.0;
                let over = match (masks.fill, m.object) {
                    (Fill::ObjectTexture, Some(p)) => {
                        let src = sources.get(p.source).ok_or_else(|| {
                            OcclusionError::MissingObject(format!("source index {}", p.source))
                        })?;
                        let (sx, sy) = p.source_pixel(x, y, src.width(), src.height());
                        let px = src.get_pixel(sx, sy).0;
                        [px[0] as f64, px[1] as f64, px[2] as f64]
                    }
                    _ => [0.0; 3],
                };
                let dst = out.get_pixel_mut(x as u32, y as u32);
                let Rgb(c) = *dst;
                *dst = Rgb(std::array::from_fn(|i| {
                    crate::geometry::to_u8(a * over[i] + (1.0 - a) * c[i] as f64)
                }));
            }
        }
    }
    Ok(out)
}

/// Training-time occlusion applied to a random subset of frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub spec: OcclusionSpec,
    pub apply_probability: f64,
}

impl AugmentationPolicy {
    pub fn new(spec: OcclusionSpec, apply_probability: f64) -> Result<Self, OcclusionError> {
        let p = Self { spec, apply_probability };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), OcclusionError> {
        self.spec.validate()?;
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(OcclusionError::InvalidSpec(format!(
                "apply probability {} outside [0, 1]",
                self.apply_probability
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    pub image: RgbImage,
    pub applied: bool,
    pub degree: Option<DegreeMeasurement>,
}

/// Occludes the frame with probability `apply_probability`. The coin flip
/// and the occluder layout are both drawn from `rng`.
pub fn apply_policy<R: RngCore>(
    policy: &AugmentationPolicy,
    image: &RgbImage,
    bbox: &BoundingBox,
    objects: Option<ObjectSource<'_>>,
    rng: &mut R,
) -> Result<PolicyOutcome, OcclusionError> {
    policy.validate()?;
    let coin: f64 = rng.random();
    if coin >= policy.apply_probability {
        return Ok(PolicyOutcome { image: image.clone(), applied: false, degree: None });
    }
    let masks = generate(&policy.spec, bbox, image.dimensions(), objects, rng)?;
    let degree = measure_degree(&masks, bbox);
    let image = composite(image, &masks, objects.map(|o| o.library))?;
    Ok(PolicyOutcome { image, applied: true, degree: Some(degree) })
}

/// Fraction of the pixels within `radius` of `(cx, cy)` that are occluded.
pub fn occluded_fraction_near(masks: &OccluderMaskSet, cx: f64, cy: f64, radius: f64) -> f64 {
    let rect = PixelRect {
        x0: (cx - radius - 0.5).ceil() as i32,
        y0: (cy - radius - 0.5).ceil() as i32,
        x1: (cx + radius - 0.5).floor() as i32 + 1,
        y1: (cy + radius - 0.5).floor() as i32 + 1,
    };
    let limit = 1.0 - ALPHA_THRESHOLD as f64 / 255.0;
    let (mut inside, mut occluded) = (0u32, 0u32);
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy > radius * radius {
                continue;
            }
            inside += 1;
            let t: f64 = masks.masks.iter().map(|m| 1.0 - m.alpha_at(x, y) as f64 / 255.0).product();
            if t <= limit {
                occluded += 1;
            }
        }
    }
    if inside == 0 {
        0.0
    } else {
        occluded as f64 / inside as f64
    }
}
