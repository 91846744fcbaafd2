//! Desk-scale synthetic sequences: a rigid-limbed stick figure moving in
//! front of a pinhole camera, rendered to RGB frames.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::RgbImage;
use nalgebra::{Point2, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::save_manifest;
use super::{DataError, FrameRecord, Pose3D, SamplingInfo, SequenceManifest, Skeleton};
use crate::geometry::{project, BoundingBox, CameraIntrinsics};
use crate::render::{render_stick_figure, StickFigureStyle};

/// One bone, ending at the joint it is attached to.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneSpec {
    pub parent: usize,
    pub length_mm: f64,
    /// Rest direction in camera axes (x right, y down, z forward).
    pub rest_dir: Vector3<f64>,
    /// Swing amplitude of the bone direction, radians.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyModel {
    pub skeleton: Skeleton,
    /// `bones[j]` attaches joint `j` to its parent; `None` for the root only.
    pub bones: Vec<Option<BoneSpec>>,
}

impl BodyModel {
    pub fn h36m_17() -> Self {
        let bone = |parent, length_mm, dir: [f64; 3], amplitude| {
            Some(BoneSpec { parent, length_mm, rest_dir: Vector3::from(dir).normalize(), amplitude })
        };
        let bones = vec![
            None,
            bone(0, 130.0, [-1.0, 0.0, 0.0], 0.15),
            bone(1, 450.0, [0.0, 1.0, 0.0], 0.6),
            bone(2, 440.0, [0.0, 1.0, 0.0], 0.6),
            bone(0, 130.0, [1.0, 0.0, 0.0], 0.15),
            bone(4, 450.0, [0.0, 1.0, 0.0], 0.6),
            bone(5, 440.0, [0.0, 1.0, 0.0], 0.6),
            bone(0, 230.0, [0.0, -1.0, 0.0], 0.2),
            bone(7, 250.0, [0.0, -1.0, 0.0], 0.2),
            bone(8, 110.0, [0.0, -1.0, -0.2], 0.25),
            bone(9, 115.0, [0.0, -1.0, 0.0], 0.3),
            bone(8, 150.0, [1.0, 0.0, 0.0], 0.15),
            bone(11, 280.0, [0.0, 1.0, 0.0], 0.8),
            bone(12, 250.0, [0.0, 1.0, 0.0], 0.8),
            bone(8, 150.0, [-1.0, 0.0, 0.0], 0.15),
            bone(14, 280.0, [0.0, 1.0, 0.0], 0.8),
            bone(15, 250.0, [0.0, 1.0, 0.0], 0.8),
        ];
        Self { skeleton: Skeleton::h36m_17(), bones }
    }

    /// Joint indices ordered so that every parent precedes its children.
    fn topological_order(&self) -> Result<Vec<usize>, DataError> {
        self.skeleton.validate()?;
        let n = self.skeleton.num_joints();
        if self.bones.len() != n {
            return Err(DataError::InvalidSkeleton(format!("{} bones for {n} joints", self.bones.len())));
        }
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        for (j, b) in self.bones.iter().enumerate() {
            match b {
                None if j == self.skeleton.root_index => {}
                None => return Err(DataError::InvalidSkeleton(format!("joint {j} has no parent bone"))),
                Some(_) if j == self.skeleton.root_index => {
                    return Err(DataError::InvalidSkeleton("root joint cannot have a parent".into()))
                }
                Some(b) if b.parent >= n || !(b.length_mm > 0.0) || b.rest_dir.norm() == 0.0 => {
                    return Err(DataError::InvalidSkeleton(format!("bone of joint {j} is malformed")))
                }
                Some(_) => {}
            }
        }
        order.push(self.skeleton.root_index);
        placed[self.skeleton.root_index] = true;
        while order.len() < n {
            let before = order.len();
            for j in 0..n {
                if let Some(b) = &self.bones[j] {
                    if !placed[j] && placed[b.parent] {
                        placed[j] = true;
                        order.push(j);
                    }
                }
            }
            if order.len() == before {
                return Err(DataError::InvalidSkeleton("bone hierarchy has a cycle".into()));
            }
        }
        Ok(order)
    }
}

impl Default for BodyModel {
    fn default() -> Self {
        Self::h36m_17()
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_frames: usize,
    pub body: BodyModel,
    /// Side of the square camera image, px.
    pub image_size: u32,
    pub seed: u64,
    /// Focal length as a multiple of the image side.
    pub focal_scale: f64,
    pub subject: String,
    pub action: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_frames: 200,
            body: BodyModel::default(),
            image_size: 256,
            seed: 0,
            focal_scale: 1.6,
            subject: "synth".into(),
            action: "wander".into(),
        }
    }
}

pub struct SyntheticDataset {
    pub manifest: SequenceManifest,
    pub images: Vec<RgbImage>,
}

#[derive(Clone, Copy)]
struct Oscillator {
    freq: [f64; 2],
    phase: [f64; 2],
}

impl Oscillator {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        Self {
            freq: [rng.random_range(0.04..0.12), rng.random_range(0.12..0.3)],
            phase: [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)],
        }
    }

    /// Smooth signal in [-1, 1].
    fn at(&self, t: f64) -> f64 {
        0.6 * (self.freq[0] * t + self.phase[0]).sin() + 0.4 * (self.freq[1] * t + self.phase[1]).sin()
    }
}

pub fn image_name(frame_id: u64) -> PathBuf {
    PathBuf::from(format!("images/{frame_id:06}.png"))
}

/// Generates a deterministic sequence and its renderings.
pub fn generate_synthetic_dataset(config: &SynthConfig) -> Result<SyntheticDataset, DataError> {
    if config.num_frames == 0 {
        return Err(DataError::InvalidParameter("num_frames must be at least 1".into()));
    }
    if config.image_size == 0 || !(config.focal_scale > 0.0) {
        return Err(DataError::InvalidParameter("image size and focal scale must be positive".into()));
    }
    let body = &config.body;
    let order = body.topological_order()?;
    let n = body.skeleton.num_joints();
    let root = body.skeleton.root_index;
    let size = config.image_size;
    let camera = CameraIntrinsics::new(
        config.focal_scale * size as f64,
        config.focal_scale * size as f64,
        size as f64 / 2.0,
        size as f64 / 2.0,
        size,
        size,
    )?;
    let style = StickFigureStyle::for_size(size);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let joint_osc: Vec<[Oscillator; 3]> = (0..n)
        .map(|_| [Oscillator::sample(&mut rng), Oscillator::sample(&mut rng), Oscillator::sample(&mut rng)])
        .collect();
    let yaw0 = rng.random_range(-0.6..0.6);
    let yaw_osc = Oscillator::sample(&mut rng);
    let root_origin = Vector3::new(rng.random_range(-250.0..250.0), 100.0, rng.random_range(4300.0..5000.0));
    let root_osc = [Oscillator::sample(&mut rng), Oscillator::sample(&mut rng), Oscillator::sample(&mut rng)];

    let mut frames = Vec::with_capacity(config.num_frames);
    let mut images = Vec::with_capacity(config.num_frames);
    for i in 0..config.num_frames {
        let t = i as f64;
        let global = Rotation3::from_euler_angles(0.0, yaw0 + 0.5 * yaw_osc.at(t), 0.0);
        let mut joints = vec![Vector3::zeros(); n];
        joints[root] = root_origin
            + Vector3::new(150.0 * root_osc[0].at(t), 30.0 * root_osc[1].at(t), 300.0 * root_osc[2].at(t));
        for &j in &order[1..] {
            let bone = body.bones[j].as_ref().expect("non-root joints have bones");
            let [a, b, c] = joint_osc[j].map(|o| bone.amplitude * o.at(t));
            let dir = global * Rotation3::from_euler_angles(a, b, c) * bone.rest_dir;
            joints[j] = joints[bone.parent] + dir * bone.length_mm;
        }

        let mut points = Vec::with_capacity(n);
        for p in &joints {
            let q = project(&camera, p).map_err(|e| DataError::ImageTooSmall {
                width: size,
                height: size,
                frame: i,
                reason: e.to_string(),
            })?;
            let r = style.joint_radius;
            if q.x - r < 0.0 || q.y - r < 0.0 || q.x + r > size as f64 || q.y + r > size as f64 {
                return Err(DataError::ImageTooSmall {
                    width: size,
                    height: size,
                    frame: i,
                    reason: format!("joint projects to ({:.1}, {:.1})", q.x, q.y),
                });
            }
            points.push(q);
        }
        let depths: Vec<f64> = joints.iter().map(|p| p.z).collect();
        images.push(render_stick_figure(size, size, &body.skeleton, &points, Some(&depths), &style));

        let bbox = figure_bbox(&points, style.joint_radius + 2.0, size);
        let frame_id = i as u64;
        frames.push(FrameRecord {
            frame_id,
            subject: config.subject.clone(),
            action: config.action.clone(),
            camera,
            bbox,
            pose_gt: Pose3D::new(joints)?,
            image_path: image_name(frame_id),
        });
    }
    let manifest = SequenceManifest {
        skeleton: body.skeleton.clone(),
        frames,
        sampling: SamplingInfo { frame_rate: Some(50.0) },
    };
    manifest.validate()?;
    Ok(SyntheticDataset { manifest, images })
}

fn figure_bbox(points: &[Point2<f64>], margin: f64, size: u32) -> BoundingBox {
    BoundingBox::enclosing(points, margin)
        .and_then(|b| b.clipped(size, size))
        .expect("projected joints lie inside the image")
}

/// Writes `manifest.json` and `images/*.png` under `dir`.
pub fn write_dataset(dataset: &SyntheticDataset, dir: impl AsRef<Path>) -> Result<PathBuf, DataError> {
    let dir = dir.as_ref();
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|source| DataError::Io { path: images_dir.clone(), source })?;
    for (frame, img) in dataset.manifest.frames.iter().zip(&dataset.images) {
        let path = dir.join(&frame.image_path);
        img.save(&path).map_err(|source| DataError::Image { path: path.clone(), source })?;
    }
    let manifest_path = dir.join("manifest.json");
    save_manifest(&dataset.manifest, &manifest_path)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::joint_color;

    fn small(num_frames: usize, seed: u64) -> SynthConfig {
        SynthConfig { num_frames, seed, ..Default::default() }
    }

    #[test]
    fn same_seed_is_deterministic() {
        let a = generate_synthetic_dataset(&small(5, 11)).unwrap();
        let b = generate_synthetic_dataset(&small(5, 11)).unwrap();
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.images, b.images);
        let c = generate_synthetic_dataset(&small(5, 12)).unwrap();
        assert_ne!(a.manifest, c.manifest);
    }

    #[test]
    fn single_frame_bbox_encloses_joints() {
        let d = generate_synthetic_dataset(&small(1, 3)).unwrap();
        let f = &d.manifest.frames[0];
        for p in f.pose_gt.joints() {
            assert!(f.bbox.contains(&project(&f.camera, p).unwrap()));
        }
    }

    #[test]
    fn bone_lengths_are_constant() {
        let d = generate_synthetic_dataset(&small(60, 4)).unwrap();
        let edges = &d.manifest.skeleton.edges;
        let len = |pose: &Pose3D, (a, b): (usize, usize)| (pose.joint(a) - pose.joint(b)).norm();
        let first = &d.manifest.frames[0].pose_gt;
        for f in &d.manifest.frames {
            for &e in edges {
                assert!((len(&f.pose_gt, e) - len(first, e)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rendered_joint_centres_match_projection() {
        let d = generate_synthetic_dataset(&small(40, 9)).unwrap();
        let n = d.manifest.skeleton.num_joints();
        let mut checked = 0;
        for (f, img) in d.manifest.frames.iter().zip(&d.images) {
            let pts: Vec<_> = f.pose_gt.joints().iter().map(|p| project(&f.camera, p).unwrap()).collect();
            let r = StickFigureStyle::for_size(img.width()).joint_radius;
            for j in 0..n {
                // only joints whose disk is not overlapped by another disk
                if (0..n).any(|k| k != j && (pts[k] - pts[j]).norm() <= 2.0 * r + 1.0) {
                    continue;
                }
                let color = joint_color(j, n);
                let (mut sx, mut sy, mut cnt) = (0.0, 0.0, 0.0);
                for (x, y, p) in img.enumerate_pixels() {
                    if p.0 == color {
                        sx += x as f64 + 0.5;
                        sy += y as f64 + 0.5;
                        cnt += 1.0;
                    }
                }
                assert!(cnt > 0.0);
                let err = ((sx / cnt - pts[j].x).powi(2) + (sy / cnt - pts[j].y).powi(2)).sqrt();
                assert!(err < 0.5, "frame {} joint {j}: {err}", f.frame_id);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn figure_too_large_is_reported() {
        let cfg = SynthConfig { num_frames: 2, focal_scale: 8.0, ..Default::default() };
        assert!(matches!(generate_synthetic_dataset(&cfg), Err(DataError::ImageTooSmall { .. })));
        assert!(generate_synthetic_dataset(&small(0, 1)).is_err());
    }
}
