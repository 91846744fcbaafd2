//! Stick-figure rasterizer: bones as thick segments, joints as disks.

use image::{Rgb, RgbImage};
use nalgebra::{Point2, Vector2};

use crate::datamodel::Skeleton;

#[derive(Debug, Clone, PartialEq)]
pub struct StickFigureStyle {
    pub background: [u8; 3],
    /// Full bone width in pixels.
    pub bone_width: f64,
    pub joint_radius: f64,
    pub left_bone: [u8; 3],
    pub right_bone: [u8; 3],
    pub center_bone: [u8; 3],
}

impl StickFigureStyle {
    /// Default style with widths scaled to the image side.
    pub fn for_size(size: u32) -> Self {
        let s = size as f64;
        Self {
            background: [96, 96, 96],
            bone_width: (s / 64.0).max(1.5),
            joint_radius: (s / 64.0).max(1.5),
            left_bone: [40, 80, 180],
            right_bone: [180, 70, 40],
            center_bone: [160, 160, 60],
        }
    }
}

/// Distinct colour for joint `j` of `n`. Every joint colour has a channel at
/// 255, which no bone or background colour has.
pub fn joint_color(j: usize, n: usize) -> [u8; 3] {
    let hue = 360.0 * j as f64 / n.max(1) as f64;
    let (r, g, b) = hsv_to_rgb(hue, 0.75, 1.0);
    [r, g, b]
}

pub(crate) fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |t: f64| ((t + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (q(r), q(g), q(b))
}

fn pixel_range(lo: f64, hi: f64, limit: u32) -> std::ops::Range<u32> {
    let a = (lo - 0.5).floor().max(0.0) as i64;
    let b = ((hi - 0.5).ceil() + 1.0).min(limit as f64) as i64;
    if b <= a {
        0..0
    } else {
        a as u32..b as u32
    }
}

/// Fills pixels whose centre lies within `radius` of `center`.
pub fn fill_disk(img: &mut RgbImage, center: &Point2<f64>, radius: f64, color: [u8; 3]) {
    let r2 = radius * radius;
    for y in pixel_range(center.y - radius, center.y + radius, img.height()) {
        for x in pixel_range(center.x - radius, center.x + radius, img.width()) {
            let d = Vector2::new(x as f64 + 0.5 - center.x, y as f64 + 0.5 - center.y);
            if d.norm_squared() <= r2 {
                img.put_pixel(x, y, Rgb(color));
            }
        }
    }
}

/// Fills pixels whose centre lies within `width / 2` of the segment `a`–`b`.
pub fn fill_segment(img: &mut RgbImage, a: &Point2<f64>, b: &Point2<f64>, width: f64, color: [u8; 3]) {
    let half = width / 2.0;
    let ab = b - a;
    let len2 = ab.norm_squared();
    let xs = pixel_range(a.x.min(b.x) - half, a.x.max(b.x) + half, img.width());
    for y in pixel_range(a.y.min(b.y) - half, a.y.max(b.y) + half, img.height()) {
        for x in xs.clone() {
            let p = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
            let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
            if (p - (a + ab * t)).norm_squared() <= half * half {
                img.put_pixel(x, y, Rgb(color));
            }
        }
    }
}

/// Renders the skeleton at the given 2D joint positions. When `depths` is
/// given, joints are painted far-to-near.
pub fn render_stick_figure(
    width: u32,
    height: u32,
    skeleton: &Skeleton,
    joints: &[Point2<f64>],
    depths: Option<&[f64]>,
    style: &StickFigureStyle,
) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb(style.background));
    for &(a, b) in &skeleton.edges {
        let sides = [skeleton.side(a), skeleton.side(b)];
        let color = if sides.contains(&-1) {
            style.left_bone
        } else if sides.contains(&1) {
            style.right_bone
        } else {
            style.center_bone
        };
        fill_segment(&mut img, &joints[a], &joints[b], style.bone_width, color);
    }
    let mut order: Vec<usize> = (0..joints.len()).collect();
    if let Some(d) = depths {
        order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    }
    for j in order {
        fill_disk(&mut img, &joints[j], style.joint_radius, joint_color(j, joints.len()));
    }
    img
}
