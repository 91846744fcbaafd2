//! `VHM1` binary heatmap files.
//!
//! Layout: the magic `VHM1`, then `J, D, H, W` as little-endian `u32`, then
//! `J·D·H·W` little-endian `f32` scores in `(j, d, h, w)` row-major order,
//! then a JSON trailer `{"crop_size": .., "depth_span_mm": ..}` running to EOF.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HeatmapError, HeatmapShape, VolumetricHeatmap};

pub const MAGIC: &[u8; 4] = b"VHM1";

#[derive(Serialize, Deserialize)]
struct Trailer {
    crop_size: u32,
    depth_span_mm: f64,
}

pub fn write_heatmap<W: Write>(mut out: W, heatmap: &VolumetricHeatmap) -> Result<(), HeatmapError> {
    let s = heatmap.shape();
    out.write_all(MAGIC)?;
    for dim in [heatmap.num_joints(), s.depth, s.height, s.width] {
        let dim = u32::try_from(dim).map_err(|_| HeatmapError::Format(format!("dimension {dim} exceeds u32")))?;
        out.write_all(&dim.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(heatmap.scores().len() * 4);
    for v in heatmap.scores() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    let trailer = Trailer { crop_size: heatmap.crop_size(), depth_span_mm: heatmap.depth_span_mm() };
    out.write_all(serde_json::to_string(&trailer).expect("trailer serializes").as_bytes())?;
    Ok(())
}

pub fn read_heatmap<R: Read>(mut input: R) -> Result<VolumetricHeatmap, HeatmapError> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| HeatmapError::Format("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(HeatmapError::Format(format!("bad magic {magic:?}")));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        let mut b = [0u8; 4];
        input
            .read_exact(&mut b)
            .map_err(|_| HeatmapError::Format("truncated header".into()))?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let [joints, depth, height, width] = dims;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| HeatmapError::Format("dimensions overflow".into()))?;
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if rest.len() < count {
        return Err(HeatmapError::Format(format!("expected {count} score bytes, found {}", rest.len())));
    }
    let scores = rest[..count]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let trailer: Trailer = serde_json::from_slice(&rest[count..])
        .map_err(|e| HeatmapError::Format(format!("trailer: {e}")))?;
    let shape = HeatmapShape { depth, height, width, depth_span_mm: trailer.depth_span_mm };
    VolumetricHeatmap::new(joints, shape, scores, trailer.crop_size)
}

pub fn save_heatmap(heatmap: &VolumetricHeatmap, path: impl AsRef<Path>) -> Result<(), HeatmapError> {
    let mut buf = Vec::new();
    write_heatmap(&mut buf, heatmap)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_heatmap(path: impl AsRef<Path>) -> Result<VolumetricHeatmap, HeatmapError> {
    read_heatmap(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let hm = VolumetricHeatmap::zeros(2, HeatmapShape { depth: 3, height: 4, width: 5, depth_span_mm: 2000.0 }, 64)
            .unwrap();
        let mut buf = Vec::new();
        write_heatmap(&mut buf, &hm).unwrap();
        assert_eq!(&buf[..4], b"VHM1");
        assert_eq!(&buf[4..8], &2u32.to_le_bytes());
        assert_eq!(&buf[16..20], &5u32.to_le_bytes());
        let trailer: serde_json::Value = serde_json::from_slice(&buf[20 + 120 * 4..]).unwrap();
        assert_eq!(trailer["crop_size"], 64);
        assert_eq!(trailer["depth_span_mm"], 2000.0);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(read_heatmap(&b"VHM2"[..]), Err(HeatmapError::Format(_))));
        assert!(matches!(read_heatmap(&b"VHM1\x01\x00"[..]), Err(HeatmapError::Format(_))));
        let mut buf = b"VHM1".to_vec();
        for d in [1u32, 1, 1, 2] {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        buf.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(matches!(read_heatmap(&buf[..]), Err(HeatmapError::Format(_))));
    }

    proptest! {
        #[test]
        fn round_trip(j in 1usize..4, d in 1usize..5, h in 1usize..5, w in 1usize..5, seed in any::<u64>(), crop in 1u32..512) {
            let n = j * d * h * w;
            let scores: Vec<f32> = (0..n).map(|i| ((seed.wrapping_mul(i as u64 + 1) % 2000) as f32 - 1000.0) / 7.0).collect();
            let hm = VolumetricHeatmap::new(j, HeatmapShape { depth: d, height: h, width: w, depth_span_mm: 1500.5 }, scores, crop).unwrap();
            let mut buf = Vec::new();
            write_heatmap(&mut buf, &hm).unwrap();
            prop_assert_eq!(read_heatmap(&buf[..]).unwrap(), hm);
        }
    }
}
