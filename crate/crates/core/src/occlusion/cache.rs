//! On-disk mask sets: `masks.json` with anchors and ids, one grayscale PNG
//! per mask holding its alpha.

use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use super::{Fill, Mask, ObjectPlacement, OccluderKind, OccluderMaskSet, OcclusionError};

#[derive(Serialize, Deserialize)]
struct CacheIndex {
    kind: OccluderKind,
    fill: Fill,
    source_ids: Vec<String>,
    masks: Vec<CachedMask>,
}

#[derive(Serialize, Deserialize)]
struct CachedMask {
    file: String,
    x: i32,
    y: i32,
    object: Option<ObjectPlacement>,
}

fn err(path: &Path, e: impl std::fmt::Display) -> OcclusionError {
    OcclusionError::Cache(format!("{}: {e}", path.display()))
}

pub fn save_mask_set(set: &OccluderMaskSet, dir: impl AsRef<Path>) -> Result<(), OcclusionError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| err(dir, e))?;
    let mut masks = Vec::with_capacity(set.masks.len());
    for (i, m) in set.masks.iter().enumerate() {
        let file = format!("mask_{i:03}.png");
        let img = GrayImage::from_raw(m.width, m.height, m.alpha.clone()).expect("alpha matches mask size");
        let path = dir.join(&file);
        img.save(&path).map_err(|e| err(&path, e))?;
        masks.push(CachedMask { file, x: m.x, y: m.y, object: m.object });
    }
    let index = CacheIndex { kind: set.kind, fill: set.fill, source_ids: set.source_ids.clone(), masks };
    let path = dir.join("masks.json");
    std::fs::write(&path, serde_json::to_string_pretty(&index).expect("index serializes")).map_err(|e| err(&path, e))
}

pub fn load_mask_set(dir: impl AsRef<Path>) -> Result<OccluderMaskSet, OcclusionError> {
    let dir = dir.as_ref();
    let path = dir.join("masks.json");
    let text = std::fs::read_to_string(&path).map_err(|e| err(&path, e))?;
    let index: CacheIndex = serde_json::from_str(&text).map_err(|e| err(&path, e))?;
    let masks = index
        .masks
        .into_iter()
        .map(|c| {
            let path = dir.join(&c.file);
            let img = image::open(&path).map_err(|e| err(&path, e))?.to_luma8();
            let (width, height) = img.dimensions();
            Ok(Mask { x: c.x, y: c.y, width, height, alpha: img.into_raw(), object: c.object })
        })
        .collect::<Result<_, OcclusionError>>()?;
    Ok(OccluderMaskSet { kind: index.kind, fill: index.fill, masks, source_ids: index.source_ids })
}
