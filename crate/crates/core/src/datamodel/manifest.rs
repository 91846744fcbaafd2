use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DataError, FrameRecord, SamplingInfo, SequenceManifest, Skeleton};

/// Declared units. Only millimetres and pixels are accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Units {
    pub length: String,
    pub pixel: String,
}

impl Default for Units {
    fn default() -> Self {
        Self { length: "mm".into(), pixel: "px".into() }
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    units: Option<Units>,
    #[serde(default)]
    sampling: SamplingInfo,
    skeleton: Skeleton,
    frames: Vec<FrameRecord>,
}

pub fn parse_manifest(text: &str) -> Result<SequenceManifest, DataError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ManifestFile = serde_path_to_error::deserialize(de).map_err(|e| DataError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    if let Some(units) = &file.units {
        if units.length != "mm" || units.pixel != "px" {
            return Err(DataError::Schema {
                path: "units".into(),
                message: format!("expected mm/px, found {}/{}", units.length, units.pixel),
            });
        }
    }
    let manifest = SequenceManifest { skeleton: file.skeleton, frames: file.frames, sampling: file.sampling };
    manifest.validate()?;
    Ok(manifest)
}

/// Reads and fully validates a JSON manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<SequenceManifest, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    parse_manifest(&text)
}

pub fn manifest_to_json(manifest: &SequenceManifest) -> String {
    let file = ManifestFile {
        units: Some(Units::default()),
        sampling: manifest.sampling.clone(),
        skeleton: manifest.skeleton.clone(),
        frames: manifest.frames.clone(),
    };
    serde_json::to_string_pretty(&file).expect("manifest serializes")
}

pub fn save_manifest(manifest: &SequenceManifest, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    std::fs::write(path, manifest_to_json(manifest)).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

/// Image paths in a manifest are relative to the manifest's directory.
pub fn resolve_image_path(manifest_path: &Path, image_path: &Path) -> PathBuf {
    if image_path.is_absolute() {
        image_path.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or_else(|| Path::new(".")).join(image_path)
    }
}
