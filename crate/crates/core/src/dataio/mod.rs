//! Array containers, dataset manifests, preprocessing and synthetic stacks.

mod manifest;
mod npy;
mod phantom;
mod preprocess;
mod splits;
mod tiff;

use std::io::Write;
use std::path::Path;

pub use manifest::{load_stack, read_manifests, read_plane_file, write_manifests, Modality, Split, StackManifest};
pub use npy::{decode_npy, encode_npy, read_array, read_plane, write_array, write_plane, NpyArray, NpyData};
pub use phantom::{generate_phantom_stack, PhantomSpec};
pub use preprocess::{
    background_median, percentile_normalize, preprocess_microscopy, preprocess_mri, scale_plane_mri,
    MRI_FULL_PLANES, MRI_MIDDLE_PLANES,
};
pub use splits::{make_splits, SplitAssignment, SplitRule};
pub use tiff::{decode_tiff_gray, read_tiff_gray};

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> crate::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| crate::Error::InvalidConfig(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
