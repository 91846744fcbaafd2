//! Occluder primitives and their rasterization to alpha masks.

use image::RgbaImage;

use super::{Mask, ObjectPlacement};

/// An occluder at unit scale. Scaling grows a shape about its own centre, so
/// a larger scale always covers a superset of pixels for disks and
/// rectangles.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Shape {
    Disk { cx: f64, cy: f64, r: f64 },
    Rect { cx: f64, cy: f64, half_w: f64, half_h: f64, angle: f64 },
    Object { cx: f64, cy: f64, w: f64, h: f64, entry: usize },
}

/// Integer pixel range whose centres fall in `[lo, hi]`.
fn centre_range(lo: f64, hi: f64) -> (i32, i32) {
    ((lo - 0.5).ceil() as i32, (hi - 0.5).floor() as i32 + 1)
}

impl Shape {
    pub fn rasterize(&self, scale: f64, objects: &[&RgbaImage], canvas: (u32, u32)) -> Option<Mask> {
        let mask = match *self {
            Shape::Disk { cx, cy, r } => {
                let r = r * scale;
                let (x0, x1) = centre_range(cx - r, cx + r);
                let (y0, y1) = centre_range(cy - r, cy + r);
                Mask::from_fn(x0, y0, x1, y1, None, |x, y| {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    dx * dx + dy * dy <= r * r
                })
            }
            Shape::Rect { cx, cy, half_w, half_h, angle } => {
                let (hw, hh) = (half_w * scale, half_h * scale);
                let (s, c) = angle.sin_cos();
                let ex = c.abs() * hw + s.abs() * hh;
                let ey = s.abs() * hw + c.abs() * hh;
                let (x0, x1) = centre_range(cx - ex, cx + ex);
                let (y0, y1) = centre_range(cy - ey, cy + ey);
                Mask::from_fn(x0, y0, x1, y1, None, |x, y| {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    (dx * c + dy * s).abs() <= hw && (-dx * s + dy * c).abs() <= hh
                })
            }
            Shape::Object { cx, cy, w, h, entry } => {
                let src = objects[entry];
                let pw = ((w * scale).round() as u32).max(1);
                let ph = ((h * scale).round() as u32).max(1);
                let placement = ObjectPlacement {
                    source: entry,
                    x: (cx - pw as f64 / 2.0).round() as i32,
                    y: (cy - ph as f64 / 2.0).round() as i32,
                    width: pw,
                    height: ph,
                };
                let (x0, y0) = (placement.x, placement.y);
                let (x1, y1) = (x0 + pw as i32, y0 + ph as i32);
                Mask::from_alpha_fn(x0, y0, x1, y1, Some(placement), |x, y| {
                    let (sx, sy) = placement.source_pixel(x, y, src.width(), src.height());
                    src.get_pixel(sx, sy).0[3]
                })
            }
        };
        mask.and_then(|m| m.clipped(canvas))
    }
}
