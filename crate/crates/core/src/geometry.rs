//! Pinhole camera math and the person-centred virtual-camera crop.
//!
//! Continuous pixel coordinates follow the "pixel area" convention: pixel
//! `(i, j)` covers `[i, i + 1) × [j, j + 1)` and its centre sits at
//! `(i + 0.5, j + 0.5)`. An image of width `W` therefore spans `[0, W]`, and
//! a crop of side `S` has its centre at `S / 2`.

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Point2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for `RᵀR = I` when a rotation is supplied from outside.
const ORTHONORMAL_TOL: f64 = 1e-9;
/// Homogeneous depths below this magnitude are treated as the plane at infinity.
const HOMOGENEOUS_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-positive depth {0} mm")]
    NonPositiveDepth(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("degenerate bounding box: {0}")]
    DegenerateBbox(String),
    #[error("invalid crop parameters: {0}")]
    InvalidCrop(String),
    #[error("point maps through the plane at infinity")]
    PlaneAtInfinity,
    #[error("image is {actual:?} but the transform expects {expected:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("principal point is not finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "image size must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

/// Axis-aligned box in pixels: top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::DegenerateBbox("non-finite coordinates".into()));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(GeometryError::DegenerateBbox(format!(
                "width and height must be positive, got {}x{}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> Point2<f64> {
        Point2::new(self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Smallest box containing every point, grown by `margin` on each side.
    pub fn enclosing(points: &[Point2<f64>], margin: f64) -> Option<Self> {
        let first = points.first()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
        for p in &points[1..] {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        Some(Self {
            x: x0 - margin,
            y: y0 - margin,
            w: x1 - x0 + 2.0 * margin,
            h: y1 - y0 + 2.0 * margin,
        })
    }

    /// Intersection with `[0, width] × [0, height]`, if non-empty.
    pub fn clipped(&self, width: u32, height: u32) -> Option<Self> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = (self.x + self.w).min(width as f64);
        let y1 = (self.y + self.h).min(height as f64);
        (x1 > x0 && y1 > y0).then_some(Self { x: x0, y: y0, w: x1 - x0, h: y1 - y0 })
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= self.x && p.x <= self.x + self.w && p.y >= self.y && p.y <= self.y + self.h
    }

    /// `[x, y, w, h]`, the order used by manifests.
    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

impl Serialize for BoundingBox {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x, y, w, h] = <[f64; 4]>::deserialize(deserializer)?;
        Ok(Self { x, y, w, h })
    }
}

/// Pinhole projection of a camera-space point (mm) to pixels.
pub fn project(k: &CameraIntrinsics, p: &Vector3<f64>) -> Result<Point2<f64>, GeometryError> {
    if !(p.z > 0.0) {
        return Err(GeometryError::NonPositiveDepth(p.z));
    }
    Ok(Point2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// Inverse of [`project`] for a known depth.
pub fn backproject(k: &CameraIntrinsics, pixel: &Point2<f64>, depth_mm: f64) -> Result<Vector3<f64>, GeometryError> {
    if !(depth_mm > 0.0) {
        return Err(GeometryError::NonPositiveDepth(depth_mm));
    }
    Ok(Vector3::new(
        (pixel.x - k.cx) * depth_mm / k.fx,
        (pixel.y - k.cy) * depth_mm / k.fy,
        depth_mm,
    ))
}

fn apply_homography(h: &Matrix3<f64>, p: &Point2<f64>) -> Result<Point2<f64>, GeometryError> {
    let q = h * Vector3::new(p.x, p.y, 1.0);
    if q.z.abs() < HOMOGENEOUS_EPS || !q.z.is_finite() {
        return Err(GeometryError::PlaneAtInfinity);
    }
    Ok(Point2::new(q.x / q.z, q.y / q.z))
}

fn is_orthonormal(r: &Matrix3<f64>) -> bool {
    let e = r.transpose() * r - Matrix3::identity();
    e.iter().all(|v| v.abs() <= ORTHONORMAL_TOL)
}

/// Reprojection from the original camera onto a rotated virtual camera whose
/// principal point is the centre of a square crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CropTransformRecord", into = "CropTransformRecord")]
pub struct CropTransform {
    rotation: Matrix3<f64>,
    k_src: CameraIntrinsics,
    k_dst: CameraIntrinsics,
    crop_size: u32,
    homography: Matrix3<f64>,
    inverse: Matrix3<f64>,
}

impl CropTransform {
    /// Builds a transform from its parts, checking every invariant.
    pub fn from_parts(
        rotation: Matrix3<f64>,
        k_src: CameraIntrinsics,
        k_dst: CameraIntrinsics,
        crop_size: u32,
    ) -> Result<Self, GeometryError> {
        k_src.validate()?;
        k_dst.validate()?;
        if crop_size == 0 {
            return Err(GeometryError::InvalidCrop("crop size must be positive".into()));
        }
        if !is_orthonormal(&rotation) {
            return Err(GeometryError::InvalidCrop("rotation is not orthonormal".into()));
        }
        let half = crop_size as f64 / 2.0;
        if k_dst.cx != half || k_dst.cy != half || k_dst.width != crop_size || k_dst.height != crop_size {
            return Err(GeometryError::InvalidCrop(format!(
                "virtual camera must be {crop_size}x{crop_size} with principal point at ({half}, {half})"
            )));
        }
        let homography = k_dst.matrix() * rotation * k_src.inverse_matrix();
        let inverse = k_src.matrix() * rotation.transpose() * k_dst.inverse_matrix();
        Ok(Self { rotation, k_src, k_dst, crop_size, homography, inverse })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn k_src(&self) -> &CameraIntrinsics {
        &self.k_src
    }

    pub fn k_dst(&self) -> &CameraIntrinsics {
        &self.k_dst
    }

    pub fn crop_size(&self) -> u32 {
        self.crop_size
    }

    pub fn homography(&self) -> &Matrix3<f64> {
        &self.homography
    }

    pub fn inverse_homography(&self) -> &Matrix3<f64> {
        &self.inverse
    }

    /// Original-image pixel to crop pixel.
    pub fn warp_point(&self, p: &Point2<f64>) -> Result<Point2<f64>, GeometryError> {
        apply_homography(&self.homography, p)
    }

    /// Crop pixel to original-image pixel.
    pub fn inverse_warp_point(&self, p: &Point2<f64>) -> Result<Point2<f64>, GeometryError> {
        apply_homography(&self.inverse, p)
    }

    /// The same crop seen through a camera mirrored about its principal point
    /// (`X → −X`). Crop pixels map as `u → crop_size − u`.
    pub fn mirrored(&self) -> Self {
        let m = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        Self::from_parts(m * self.rotation * m, self.k_src, self.k_dst, self.crop_size)
            .expect("mirroring preserves every invariant")
    }

    /// Axis-aligned crop-space hull of an original-image box, clipped to the crop.
    pub fn warp_bbox(&self, bbox: &BoundingBox) -> Result<BoundingBox, GeometryError> {
        let c = bbox.center();
        let samples = [
            Point2::new(bbox.x, bbox.y),
            Point2::new(bbox.x + bbox.w, bbox.y),
            Point2::new(bbox.x, bbox.y + bbox.h),
            Point2::new(bbox.x + bbox.w, bbox.y + bbox.h),
            Point2::new(c.x, bbox.y),
            Point2::new(c.x, bbox.y + bbox.h),
            Point2::new(bbox.x, c.y),
            Point2::new(bbox.x + bbox.w, c.y),
        ];
        let warped = samples
            .iter()
            .map(|p| self.warp_point(p))
            .collect::<Result<Vec<_>, _>>()?;
        BoundingBox::enclosing(&warped, 0.0)
            .and_then(|b| b.clipped(self.crop_size, self.crop_size))
            .ok_or_else(|| GeometryError::DegenerateBbox("box falls outside the crop".into()))
    }
}

#[derive(Serialize, Deserialize)]
struct CropTransformRecord {
    rotation: [[f64; 3]; 3],
    k_src: CameraIntrinsics,
    k_dst: CameraIntrinsics,
    crop_size: u32,
    homography: [[f64; 3]; 3],
}

fn rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

impl From<CropTransform> for CropTransformRecord {
    fn from(t: CropTransform) -> Self {
        Self {
            rotation: rows(&t.rotation),
            k_src: t.k_src,
            k_dst: t.k_dst,
            crop_size: t.crop_size,
            homography: rows(&t.homography),
        }
    }
}

impl TryFrom<CropTransformRecord> for CropTransform {
    type Error = GeometryError;

    fn try_from(r: CropTransformRecord) -> Result<Self, Self::Error> {
        let rotation = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        // The stored homography is derived data; it is recomputed from the parts.
        Self::from_parts(rotation, r.k_src, r.k_dst, r.crop_size)
    }
}

/// Virtual camera looking at the centre of `bbox`, zoomed so the larger box
/// side spans `coverage * crop_size` pixels.
///
/// The virtual optical axis is the back-projected box centre. Roll is fixed by
/// keeping the virtual y-axis orthogonal to the original x-axis, which keeps
/// image rows as level as possible. A box centred on the principal point
/// yields the identity rotation exactly.
pub fn make_crop_transform(
    k: &CameraIntrinsics,
    bbox: &BoundingBox,
    crop_size: u32,
    coverage: f64,
) -> Result<CropTransform, GeometryError> {
    k.validate()?;
    bbox.validate()?;
    if crop_size == 0 {
        return Err(GeometryError::InvalidCrop("crop size must be positive".into()));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(GeometryError::InvalidCrop(format!("coverage must be in (0, 1], got {coverage}")));
    }

    let k_inv = k.inverse_matrix();
    let c = bbox.center();
    let z_axis = (k_inv * Vector3::new(c.x, c.y, 1.0)).normalize();
    let y_axis = z_axis.cross(&Vector3::x()).normalize();
    let x_axis = y_axis.cross(&z_axis);
    let rotation = Matrix3::from_rows(&[x_axis.transpose(), y_axis.transpose(), z_axis.transpose()]);

    // Extent of the box through its centre lines, in normalized virtual-camera
    // coordinates scaled by the source focal lengths.
    let normalized = |p: Point2<f64>| -> Result<Point2<f64>, GeometryError> {
        let q = rotation * k_inv * Vector3::new(p.x, p.y, 1.0);
        if q.z <= HOMOGENEOUS_EPS {
            return Err(GeometryError::DegenerateBbox("box spans behind the virtual camera".into()));
        }
        Ok(Point2::new(q.x / q.z, q.y / q.z))
    };
    let left = normalized(Point2::new(bbox.x, c.y))?;
    let right = normalized(Point2::new(bbox.x + bbox.w, c.y))?;
    let top = normalized(Point2::new(c.x, bbox.y))?;
    let bottom = normalized(Point2::new(c.x, bbox.y + bbox.h))?;
    let extent_x = (right.x - left.x).abs() * k.fx;
    let extent_y = (bottom.y - top.y).abs() * k.fy;
    let extent = extent_x.max(extent_y);
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(GeometryError::DegenerateBbox("box has no extent after reprojection".into()));
    }
    let scale = coverage * crop_size as f64 / extent;
    let half = crop_size as f64 / 2.0;
    let k_dst = CameraIntrinsics {
        fx: k.fx * scale,
        fy: k.fy * scale,
        cx: half,
        cy: half,
        width: crop_size,
        height: crop_size,
    };
    CropTransform::from_parts(rotation, *k, k_dst, crop_size)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    #[default]
    Bilinear,
}

/// Samples `image` at a continuous pixel coordinate; outside pixels are black.
pub fn sample(image: &RgbImage, p: &Point2<f64>, interpolation: Interpolation) -> [f64; 3] {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let fetch = |x: i64, y: i64| -> [f64; 3] {
        if x < 0 || y < 0 || x >= w || y >= h {
            [0.0; 3]
        } else {
            let Rgb(px) = *image.get_pixel(x as u32, y as u32);
            [px[0] as f64, px[1] as f64, px[2] as f64]
        }
    };
    // Index space: pixel centres at integers.
    let (sx, sy) = (p.x - 0.5, p.y - 0.5);
    match interpolation {
        Interpolation::Nearest => fetch(sx.round() as i64, sy.round() as i64),
        Interpolation::Bilinear => {
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let mut out = [0.0; 3];
            for (dx, dy, wgt) in [
                (0, 0, (1.0 - fx) * (1.0 - fy)),
                (1, 0, fx * (1.0 - fy)),
                (0, 1, (1.0 - fx) * fy),
                (1, 1, fx * fy),
            ] {
                if wgt == 0.0 {
                    continue;
                }
                let v = fetch(x0 + dx, y0 + dy);
                for c in 0..3 {
                    out[c] += wgt * v[c];
                }
            }
            out
        }
    }
}

pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Resamples the original image into the `crop_size²` virtual-camera crop.
pub fn warp_image(t: &CropTransform, image: &RgbImage, interpolation: Interpolation) -> Result<RgbImage, GeometryError> {
    let actual = image.dimensions();
    if actual != t.k_src.size() {
        return Err(GeometryError::DimensionMismatch { expected: t.k_src.size(), actual });
    }
    let size = t.crop_size as usize;
    let mut buf = vec![0u8; size * size * 3];
    buf.par_chunks_mut(size * 3).enumerate().for_each(|(row, out)| {
        for col in 0..size {
            let dst = Point2::new(col as f64 + 0.5, row as f64 + 0.5);
            if let Ok(src) = t.inverse_warp_point(&dst) {
                let v = sample(image, &src, interpolation);
                for c in 0..3 {
                    out[col * 3 + c] = to_u8(v[c]);
                }
            }
        }
    });
    Ok(RgbImage::from_raw(t.crop_size, t.crop_size, buf).expect("buffer matches crop dimensions"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k1000() -> CameraIntrinsics {
        CameraIntrinsics::new(1000.0, 1000.0, 500.0, 500.0, 1000, 1000).unwrap()
    }

    #[test]
    fn project_principal_ray() {
        let k = k1000();
        for z in [1.0, 250.0, 5000.0] {
            let p = project(&k, &Vector3::new(0.0, 0.0, z)).unwrap();
            assert_eq!((p.x, p.y), (500.0, 500.0));
        }
    }

    #[test]
    fn project_and_backproject_examples() {
        let k = k1000();
        let p = project(&k, &Vector3::new(100.0, 0.0, 1000.0)).unwrap();
        assert_eq!((p.x, p.y), (600.0, 500.0));
        let b = backproject(&k, &Point2::new(600.0, 500.0), 1000.0).unwrap();
        assert_eq!(b, Vector3::new(100.0, 0.0, 1000.0));
        let b = backproject(&k, &Point2::new(500.0, 500.0), 5000.0).unwrap();
        assert_eq!(b, Vector3::new(0.0, 0.0, 5000.0));
    }

    #[test]
    fn non_positive_depth_is_rejected() {
        let k = k1000();
        assert!(matches!(project(&k, &Vector3::new(1.0, 1.0, 0.0)), Err(GeometryError::NonPositiveDepth(_))));
        assert!(matches!(
            backproject(&k, &Point2::new(1.0, 1.0), -5.0),
            Err(GeometryError::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn degenerate_inputs() {
        let k = k1000();
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 10.0).is_err());
        let bad = BoundingBox { x: 0.0, y: 0.0, w: 10.0, h: -1.0 };
        assert!(matches!(make_crop_transform(&k, &bad, 256, 0.8), Err(GeometryError::DegenerateBbox(_))));
        let ok = BoundingBox::new(400.0, 400.0, 200.0, 200.0).unwrap();
        assert!(make_crop_transform(&k, &ok, 0, 0.8).is_err());
        assert!(make_crop_transform(&k, &ok, 256, 0.0).is_err());
        assert!(make_crop_transform(&k, &ok, 256, 1.5).is_err());
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
    }

    #[test]
    fn on_axis_bbox_gives_identity_rotation() {
        let k = k1000();
        let bbox = BoundingBox::new(400.0, 350.0, 200.0, 300.0).unwrap();
        let t = make_crop_transform(&k, &bbox, 256, 0.8).unwrap();
        let e = t.rotation() - Matrix3::identity();
        assert!(e.amax() <= 1e-12);
        // larger side (300 px) maps to 0.8 * 256
        assert!((t.k_dst().fy * 300.0 / 1000.0 - 204.8).abs() < 1e-9);
    }

    #[test]
    fn identity_transform_leaves_points_and_images_unchanged() {
        let k = CameraIntrinsics::new(300.0, 300.0, 32.0, 32.0, 64, 64).unwrap();
        let t = CropTransform::from_parts(Matrix3::identity(), k, k, 64).unwrap();
        let p = Point2::new(12.25, 40.5);
        let q = t.warp_point(&p).unwrap();
        assert!((q - p).norm() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = RgbImage::from_fn(64, 64, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
        assert_eq!(warp_image(&t, &img, Interpolation::Bilinear).unwrap(), img);
        assert_eq!(warp_image(&t, &img, Interpolation::Nearest).unwrap(), img);
    }

    #[test]
    fn uniform_source_gives_uniform_interior() {
        let k = CameraIntrinsics::new(900.0, 900.0, 310.0, 250.0, 640, 480).unwrap();
        let img = RgbImage::from_pixel(640, 480, Rgb([37, 120, 201]));
        let bbox = BoundingBox::new(200.0, 120.0, 150.0, 260.0).unwrap();
        let t = make_crop_transform(&k, &bbox, 128, 0.8).unwrap();
        let crop = warp_image(&t, &img, Interpolation::Bilinear).unwrap();
        for y in 20..108 {
            for x in 20..108 {
                assert_eq!(*crop.get_pixel(x, y), Rgb([37, 120, 201]));
            }
        }
        let wrong = RgbImage::new(10, 10);
        assert!(matches!(
            warp_image(&t, &wrong, Interpolation::Bilinear),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn crop_transform_json_round_trip() {
        let k = k1000();
        let bbox = BoundingBox::new(100.0, 650.0, 180.0, 220.0).unwrap();
        let t = make_crop_transform(&k, &bbox, 256, 0.8).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["homography"].as_array().unwrap().len(), 3);
        let back: CropTransform = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rotation(), t.rotation());
        assert!((back.homography() - t.homography()).amax() < 1e-12);
    }

    #[test]
    fn mirrored_transform_flips_crop_u() {
        let k = k1000();
        let bbox = BoundingBox::new(620.0, 100.0, 150.0, 260.0).unwrap();
        let t = make_crop_transform(&k, &bbox, 256, 0.8).unwrap();
        let m = t.mirrored();
        let p = Vector3::new(230.0, -170.0, 4200.0);
        let pm = Vector3::new(-p.x, p.y, p.z);
        let a = t.warp_point(&project(&k, &p).unwrap()).unwrap();
        let b = m.warp_point(&project(&k, &pm).unwrap()).unwrap();
        assert!((a.x - (256.0 - b.x)).abs() < 1e-9);
        assert!((a.y - b.y).abs() < 1e-9);
    }
}
