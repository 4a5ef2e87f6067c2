use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::npy::read_plane;
use super::tiff::read_tiff_gray;
use crate::error::{Error, Result};
use crate::stack::{ImageStack, Plane};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Mri,
    FluorLow,
    FluorHigh,
    Brightfield,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One stack on disk. Plane paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub id: String,
    pub modality: Modality,
    pub plane_files: Vec<PathBuf>,
    pub split: Split,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "P")]
    pub planes: usize,
}

impl StackManifest {
    pub fn validate(&self) -> Result<()> {
        if self.plane_files.len() != self.planes {
            return Err(Error::InvalidStack(format!(
                "manifest '{}' lists {} plane files but P = {}",
                self.id,
                self.plane_files.len(),
                self.planes
            )));
        }
        Ok(())
    }
}

/// Reads a manifest file holding either one stack object or an array of them.
pub fn read_manifests(path: impl AsRef<Path>) -> Result<Vec<StackManifest>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let manifests: Vec<StackManifest> = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    for m in &manifests {
        m.validate()?;
    }
    Ok(manifests)
}

pub fn write_manifests(path: impl AsRef<Path>, manifests: &[StackManifest]) -> Result<()> {
    let text = serde_json::to_string_pretty(manifests)?;
    super::write_atomic(path.as_ref(), text.as_bytes())
}

/// Loads a plane by extension: `.npy`, `.tif` or `.tiff`.
pub fn read_plane_file(path: &Path) -> Result<Plane> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("npy") => read_plane(path),
        Some("tif") | Some("tiff") => read_tiff_gray(path),
        _ => Err(Error::InvalidConfig(format!("unknown plane file type: {}", path.display()))),
    }
}

/// Loads every plane of `manifest`, resolving paths against `base_dir`.
pub fn load_stack(manifest: &StackManifest, base_dir: &Path) -> Result<ImageStack> {
    manifest.validate()?;
    let planes = manifest
        .plane_files
        .iter()
        .map(|f| {
            let p = read_plane_file(&base_dir.join(f))?;
            if p.dim() != (manifest.height, manifest.width) {
                return Err(Error::ShapeMismatch {
                    expected: vec![manifest.height, manifest.width],
                    found: vec![p.dim().0, p.dim().1],
                });
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    ImageStack::new(manifest.id.clone(), planes)
}
