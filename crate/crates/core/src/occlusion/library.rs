//! Segmented object cut-outs used as realistic occluders.
//!
//! On disk a library is a directory of RGBA PNGs plus `manifest.json`:
//! `{"entries": [{"id": "...", "file": "...", "split": "train" | "test"}]}`.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{Rgba, RgbaImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::OcclusionError;
use crate::render::hsv_to_rgb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = OcclusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(OcclusionError::InvalidSpec(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectEntry {
    pub id: String,
    /// Alpha is the segmentation mask.
    pub image: RgbaImage,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectLibrary {
    entries: Vec<ObjectEntry>,
}

#[derive(Serialize, Deserialize)]
struct LibraryManifest {
    entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    file: PathBuf,
    split: Split,
}

impl ObjectLibrary {
    pub fn new(entries: Vec<ObjectEntry>) -> Result<Self, OcclusionError> {
        let mut ids = HashSet::new();
        for e in &entries {
            if !ids.insert(e.id.as_str()) {
                return Err(OcclusionError::Library(format!("duplicate object id {:?}", e.id)));
            }
            if !e.image.pixels().any(|p| p.0[3] > 0) {
                return Err(OcclusionError::Library(format!("object {:?} has an empty mask", e.id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ObjectEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&ObjectEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Indices of the entries in one split.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].split == split).collect()
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, OcclusionError> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|e| OcclusionError::Library(format!("{}: {e}", manifest_path.display())))?;
        let manifest: LibraryManifest = serde_json::from_str(&text)
            .map_err(|e| OcclusionError::Library(format!("{}: {e}", manifest_path.display())))?;
        let entries = manifest
            .entries
            .into_iter()
            .map(|m| {
                let path = dir.join(&m.file);
                let image = image::open(&path)
                    .map_err(|e| OcclusionError::Library(format!("{}: {e}", path.display())))?
                    .to_rgba8();
                Ok(ObjectEntry { id: m.id, image, split: m.split })
            })
            .collect::<Result<Vec<_>, OcclusionError>>()?;
        Self::new(entries)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), OcclusionError> {
        let dir = dir.as_ref();
        let io = |e: std::io::Error| OcclusionError::Library(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut manifest = LibraryManifest { entries: Vec::new() };
        for e in &self.entries {
            let file = PathBuf::from(format!("{}.png", e.id));
            e.image
                .save(dir.join(&file))
                .map_err(|err| OcclusionError::Library(format!("{}: {err}", e.id)))?;
            manifest.entries.push(ManifestEntry { id: e.id.clone(), file, split: e.split });
        }
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), json).map_err(io)
    }

    /// Procedural stand-in for a segmented-object library: textured,
    /// star-shaped blobs around the bitmap centre, split into train and test.
    pub fn synthetic(train: usize, test: usize, size: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..train + test)
            .map(|i| {
                let split = if i < train { Split::Train } else { Split::Test };
                let index = if i < train { i } else { i - train };
                ObjectEntry { id: format!("synth-{split}-{index:03}"), image: blob(&mut rng, size), split }
            })
            .collect();
        Self::new(entries).expect("synthetic entries are valid")
    }
}

fn blob(rng: &mut ChaCha8Rng, size: u32) -> RgbaImage {
    let lobes = rng.random_range(2..6) as f64;
    let phase = rng.random_range(0.0..2.0 * PI);
    let wobble = rng.random_range(0.1..0.35);
    let aspect = rng.random_range(0.6..1.0);
    let hue = rng.random_range(0.0..360.0);
    let stripe = rng.random_range(3.0..12.0);
    let (a, b) = (hsv_to_rgb(hue, 0.6, 0.8), hsv_to_rgb(hue + 40.0, 0.5, 0.45));
    let half = size as f64 / 2.0;
    RgbaImage::from_fn(size, size, |x, y| {
        let dx = (x as f64 + 0.5 - half) / half;
        let dy = (y as f64 + 0.5 - half) / (half * aspect);
        let r = (dx * dx + dy * dy).sqrt();
        let theta = dy.atan2(dx);
        let radius = 0.85 * (1.0 - wobble + wobble * (lobes * theta + phase).cos());
        if r <= radius {
            let (cr, cg, cb) = if (((x as f64 + y as f64) / stripe) as u32).is_multiple_of(2) { a } else { b };
            Rgba([cr, cg, cb, 255])
        } else {
            Rgba([0, 0, 0, 0])
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_library_is_split_and_valid() {
        let lib = ObjectLibrary::synthetic(5, 3, 48, 1);
        assert_eq!(lib.split_indices(Split::Train).len(), 5);
        assert_eq!(lib.split_indices(Split::Test).len(), 3);
        for e in lib.entries() {
            // star-shaped around the centre
            let c = e.image.get_pixel(24, 24);
            assert_eq!(c.0[3], 255);
        }
    }

    #[test]
    fn invariants() {
        let img = RgbaImage::from_pixel(4, 4, Rgba([1, 2, 3, 255]));
        let e = |id: &str, split| ObjectEntry { id: id.into(), image: img.clone(), split };
        assert!(ObjectLibrary::new(vec![e("a", Split::Train), e("a", Split::Test)]).is_err());
        let empty = ObjectEntry { id: "b".into(), image: RgbaImage::new(4, 4), split: Split::Test };
        assert!(ObjectLibrary::new(vec![empty]).is_err());
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lib = ObjectLibrary::synthetic(2, 2, 24, 9);
        lib.save(dir.path()).unwrap();
        assert_eq!(ObjectLibrary::load(dir.path()).unwrap(), lib);
    }
}
