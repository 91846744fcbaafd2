//! Training-time image augmentation that keeps 2D joint labels consistent.
//!
//! Geometric augmentation is one affine map about the image centre
//! (rotation, isotropic scale, translation, optional mirror), applied to
//! pixels by inverse bilinear sampling and to joints directly. Photometric
//! augmentation touches pixels only.

use image::RgbImage;
use nalgebra::{Matrix3, Point2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::Skeleton;
use crate::geometry::{sample, to_u8, Interpolation};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augmentation parameters: {0}")]
    InvalidParams(String),
    #[error("horizontal flip requested but the skeleton has no left/right pairs")]
    AsymmetricFlip,
    #[error("expected {expected} joints, got {actual}")]
    JointCount { expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentParams {
    pub rotation_deg: (f64, f64),
    pub scale: (f64, f64),
    /// Applied independently to x and y.
    pub translation_px: (f64, f64),
    pub flip_probability: f64,
    /// Relative brightness change; pixel values are multiplied by `1 + b`.
    pub brightness: (f64, f64),
    /// Relative contrast change about the mean intensity.
    pub contrast: (f64, f64),
    /// Hue rotation in degrees about the grey axis.
    pub hue_deg: (f64, f64),
    pub blur_sigma: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            rotation_deg: (-15.0, 15.0),
            scale: (0.85, 1.15),
            translation_px: (-8.0, 8.0),
            flip_probability: 0.5,
            brightness: (-0.2, 0.2),
            contrast: (-0.2, 0.2),
            hue_deg: (-10.0, 10.0),
            blur_sigma: (0.0, 1.5),
            seed: 0,
        }
    }
}

impl AugmentParams {
    /// Parameters that leave images and joints untouched.
    pub fn identity() -> Self {
        Self {
            rotation_deg: (0.0, 0.0),
            scale: (1.0, 1.0),
            translation_px: (0.0, 0.0),
            flip_probability: 0.0,
            brightness: (0.0, 0.0),
            contrast: (0.0, 0.0),
            hue_deg: (0.0, 0.0),
            blur_sigma: (0.0, 0.0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let ranges = [
            ("rotation_deg", self.rotation_deg),
            ("scale", self.scale),
            ("translation_px", self.translation_px),
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("hue_deg", self.hue_deg),
            ("blur_sigma", self.blur_sigma),
        ];
        for (name, (lo, hi)) in ranges {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(AugmentError::InvalidParams(format!("{name} range [{lo}, {hi}] is not ordered")));
            }
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(AugmentError::InvalidParams(format!("flip_probability {} outside [0, 1]", self.flip_probability)));
        }
        if self.scale.0 <= 0.0 {
            return Err(AugmentError::InvalidParams("scale must be positive".into()));
        }
        if self.blur_sigma.0 < 0.0 {
            return Err(AugmentError::InvalidParams("blur_sigma must be non-negative".into()));
        }
        if self.brightness.0 < -1.0 || self.contrast.0 < -1.0 {
            return Err(AugmentError::InvalidParams("brightness and contrast must be ≥ -1".into()));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// One draw of the geometric parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricSample {
    pub rotation_deg: f64,
    pub scale: f64,
    pub translation: (f64, f64),
    pub flip: bool,
}

impl GeometricSample {
    pub fn identity() -> Self {
        Self { rotation_deg: 0.0, scale: 1.0, translation: (0.0, 0.0), flip: false }
    }

    pub fn draw<R: Rng + ?Sized>(params: &AugmentParams, rng: &mut R) -> Self {
        let rotation_deg = uniform(rng, params.rotation_deg);
        let scale = uniform(rng, params.scale);
        let tx = uniform(rng, params.translation_px);
        let ty = uniform(rng, params.translation_px);
        let flip = rng.random::<f64>() < params.flip_probability;
        Self { rotation_deg, scale, translation: (tx, ty), flip }
    }

    /// Homogeneous map from input to output pixel coordinates for a
    /// `width × height` image.
    pub fn matrix(&self, width: u32, height: u32) -> Matrix3<f64> {
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let k = self.scale;
        let (tx, ty) = self.translation;
        // p' = centre + k R (p - centre) + t
        let a = Matrix3::new(
            k * c, -k * s, cx + tx - k * (c * cx - s * cy),
            k * s, k * c, cy + ty - k * (s * cx + c * cy),
            0.0, 0.0, 1.0,
        );
        if self.flip {
            Matrix3::new(-1.0, 0.0, width as f64, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0) * a
        } else {
            a
        }
    }
}

fn apply(m: &Matrix3<f64>, p: &Point2<f64>) -> Point2<f64> {
    let v = m * Vector3::new(p.x, p.y, 1.0);
    Point2::new(v.x, v.y)
}

/// Resamples `image` under the affine map `m` (input → output).
pub fn warp_affine(image: &RgbImage, m: &Matrix3<f64>) -> RgbImage {
    let inv = m.try_inverse().expect("augmentation affine is invertible");
    let (w, h) = image.dimensions();
    let mut buf = vec![0u8; (w * h * 3) as usize];
    buf.par_chunks_mut((w * 3) as usize).enumerate().for_each(|(row, out)| {
        for col in 0..w as usize {
            let src = apply(&inv, &Point2::new(col as f64 + 0.5, row as f64 + 0.5));
            let v = sample(image, &src, Interpolation::Bilinear);
            for ch in 0..3 {
                out[col * 3 + ch] = to_u8(v[ch]);
            }
        }
    });
    RgbImage::from_raw(w, h, buf).expect("buffer matches image size")
}

/// Mirrors joints about the vertical centre line and swaps left/right labels.
pub fn flip_joints(joints: &[Point2<f64>], width: u32, skeleton: &Skeleton) -> Vec<Point2<f64>> {
    let perm = skeleton.flip_permutation();
    perm.iter().map(|&src| Point2::new(width as f64 - joints[src].x, joints[src].y)).collect()
}

/// Applies an explicit geometric sample to an image and its joints.
pub fn apply_geometric(
    image: &RgbImage,
    joints: &[Point2<f64>],
    skeleton: &Skeleton,
    g: &GeometricSample,
) -> Result<(RgbImage, Vec<Point2<f64>>), AugmentError> {
    if joints.len() != skeleton.num_joints() {
        return Err(AugmentError::JointCount { expected: skeleton.num_joints(), actual: joints.len() });
    }
    if g.flip && skeleton.left_right_pairs.is_empty() {
        return Err(AugmentError::AsymmetricFlip);
    }
    let (w, h) = image.dimensions();
    let m = g.matrix(w, h);
    let moved: Vec<_> = joints.iter().map(|p| apply(&m, p)).collect();
    let out = if m == Matrix3::identity() { image.clone() } else { warp_affine(image, &m) };
    let joints = if g.flip {
        // positions are already mirrored by `m`; only the labels move
        skeleton.flip_permutation().iter().map(|&src| moved[src]).collect()
    } else {
        moved
    };
    Ok((out, joints))
}

/// Draws a geometric sample from `rng` and applies it.
pub fn geometric_augment<R: Rng + ?Sized>(
    image: &RgbImage,
    joints: &[Point2<f64>],
    skeleton: &Skeleton,
    params: &AugmentParams,
    rng: &mut R,
) -> Result<(RgbImage, Vec<Point2<f64>>, GeometricSample), AugmentError> {
    params.validate()?;
    if params.flip_probability > 0.0 && skeleton.left_right_pairs.is_empty() {
        return Err(AugmentError::AsymmetricFlip);
    }
    let g = GeometricSample::draw(params, rng);
    let (img, joints) = apply_geometric(image, joints, skeleton, &g)?;
    Ok((img, joints, g))
}

/// One draw of the photometric parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotometricSample {
    pub brightness: f64,
    pub contrast: f64,
    pub hue_deg: f64,
    pub blur_sigma: f64,
}

impl PhotometricSample {
    pub fn draw<R: Rng + ?Sized>(params: &AugmentParams, rng: &mut R) -> Self {
        Self {
            brightness: uniform(rng, params.brightness),
            contrast: uniform(rng, params.contrast),
            hue_deg: uniform(rng, params.hue_deg),
            blur_sigma: uniform(rng, params.blur_sigma),
        }
    }
}

/// Rotation by `deg` about the (1,1,1) axis of RGB space.
fn hue_matrix(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    let k = 1.0 / 3f64.sqrt();
    let cross = Matrix3::new(0.0, -k, k, k, 0.0, -k, -k, k, 0.0);
    let outer = Matrix3::from_element(k * k);
    Matrix3::identity() * c + cross * s + outer * (1.0 - c)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian blur with clamped borders, in place on an
/// interleaved RGB float buffer.
fn blur(buf: &mut [f64], w: usize, h: usize, sigma: f64) {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; buf.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                tmp[(y * w + x) * 3 + ch] = k
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| {
                        let sx = (x as i64 + i as i64 - r).clamp(0, w as i64 - 1) as usize;
                        kv * buf[(y * w + sx) * 3 + ch]
                    })
                    .sum();
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                buf[(y * w + x) * 3 + ch] = k
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| {
                        let sy = (y as i64 + i as i64 - r).clamp(0, h as i64 - 1) as usize;
                        kv * tmp[(sy * w + x) * 3 + ch]
                    })
                    .sum();
            }
        }
    }
}

/// Applies an explicit photometric sample: brightness, contrast and hue,
/// clamping to [0, 255], then blur.
pub fn apply_photometric(image: &RgbImage, p: &PhotometricSample) -> RgbImage {
    let (w, h) = image.dimensions();
    let raw = image.as_raw();
    let n = (w * h) as f64;
    let mean = if n > 0.0 { raw.iter().map(|&v| v as f64).sum::<f64>() / (3.0 * n) } else { 0.0 };
    let hue = hue_matrix(p.hue_deg);
    let gain = 1.0 + p.brightness;
    let contrast = 1.0 + p.contrast;
    let mut buf: Vec<f64> = Vec::with_capacity(raw.len());
    for px in raw.chunks_exact(3) {
        let mut v = Vector3::new(px[0] as f64, px[1] as f64, px[2] as f64);
        if p.hue_deg != 0.0 {
            v = hue * v;
        }
        for ch in 0..3 {
            let x = gain * v[ch];
            let x = if p.contrast != 0.0 { mean * gain + contrast * (x - mean * gain) } else { x };
            buf.push(x.clamp(0.0, 255.0));
        }
    }
    if p.blur_sigma > 1e-3 {
        blur(&mut buf, w as usize, h as usize, p.blur_sigma);
    }
    RgbImage::from_raw(w, h, buf.into_iter().map(to_u8).collect()).expect("buffer matches image size")
}

/// Draws a photometric sample from `rng` and applies it.
pub fn photometric_augment<R: Rng + ?Sized>(
    image: &RgbImage,
    params: &AugmentParams,
    rng: &mut R,
) -> Result<(RgbImage, PhotometricSample), AugmentError> {
    params.validate()?;
    let p = PhotometricSample::draw(params, rng);
    Ok((apply_photometric(image, &p), p))
}
