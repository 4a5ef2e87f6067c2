//! On-disk layout shared by the commands.
//!
//! A stack directory holds `plane_{i:03}.npy` files and is listed in a
//! `manifest.json` next to it. Noise realizations add `_mask`, `_spec_re`
//! and `_spec_im` siblings to each `plane_{i:03}_noisy.npy`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ndarray::Array2;
use num_complex::Complex64;
use stackdenoise::dataio::{load_stack, read_array, read_manifests, write_array, write_manifests, NpyArray, NpyData, StackManifest};
use stackdenoise::kspace::NoiseRealization;
use stackdenoise::ImageStack;

pub const MANIFEST: &str = "manifest.json";

/// Directory-safe form of a stack id.
pub fn stack_dir_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn plane_file(i: usize) -> String {
    format!("plane_{i:03}.npy")
}

fn base_dir(manifest: &Path) -> &Path {
    manifest.parent().unwrap_or(Path::new("."))
}

#[derive(Debug, Clone)]
pub struct LoadedStack {
    pub manifest: StackManifest,
    pub stack: ImageStack,
    /// Absolute or manifest-relative paths of the plane files as read.
    pub plane_paths: Vec<PathBuf>,
}

pub fn load_manifest_stacks(path: &Path) -> Result<Vec<LoadedStack>> {
    let manifests = read_manifests(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let base = base_dir(path);
    manifests
        .into_iter()
        .map(|m| {
            let stack = load_stack(&m, base).with_context(|| format!("loading stack '{}'", m.id))?;
            let plane_paths = m.plane_files.iter().map(|f| base.join(f)).collect();
            Ok(LoadedStack {
                manifest: m,
                stack,
                plane_paths,
            })
        })
        .collect()
}

/// Writes each stack as `out/<id>/plane_*.npy` and a manifest listing them.
/// Modality and split are copied from `like`.
pub fn write_stacks(out: &Path, stacks: &[(StackManifest, ImageStack)]) -> Result<Vec<StackManifest>> {
    let mut manifests = Vec::with_capacity(stacks.len());
    for (like, stack) in stacks {
        let dir = stack_dir_name(stack.id());
        std::fs::create_dir_all(out.join(&dir))?;
        let mut files = Vec::with_capacity(stack.len());
        for (i, plane) in stack.planes().iter().enumerate() {
            let rel = PathBuf::from(&dir).join(plane_file(i));
            write_array(out.join(&rel), &NpyArray::from_plane(plane))?;
            files.push(rel);
        }
        let (h, w) = stack.dim();
        manifests.push(StackManifest {
            id: stack.id().to_string(),
            modality: like.modality,
            plane_files: files,
            split: like.split,
            height: h,
            width: w,
            planes: stack.len(),
        });
    }
    write_manifests(out.join(MANIFEST), &manifests)?;
    Ok(manifests)
}

/// Realization file stem for plane `i` of a stack directory.
pub fn realization_stem(i: usize) -> String {
    format!("plane_{i:03}")
}

pub fn write_realization(dir: &Path, i: usize, r: &NoiseRealization) -> Result<PathBuf> {
    let stem = realization_stem(i);
    let (h, w) = r.dim();
    let noisy = dir.join(format!("{stem}_noisy.npy"));
    write_array(&noisy, &NpyArray::from_plane(&r.noisy_image))?;
    let mask = r.mask.iter().map(|&m| if m { 1.0f32 } else { 0.0 }).collect();
    write_array(dir.join(format!("{stem}_mask.npy")), &NpyArray::new(vec![h, w], NpyData::F32(mask))?)?;
    write_array(
        dir.join(format!("{stem}_spec_re.npy")),
        &NpyArray::from_plane(&r.raw_spectrum.mapv(|c| c.re)),
    )?;
    write_array(
        dir.join(format!("{stem}_spec_im.npy")),
        &NpyArray::from_plane(&r.raw_spectrum.mapv(|c| c.im)),
    )?;
    Ok(noisy)
}

/// Loads the realization whose noisy image is stored at `noisy_path`.
pub fn read_realization(noisy_path: &Path, lambda: f64) -> Result<NoiseRealization> {
    let name = noisy_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| anyhow!("bad plane path {}", noisy_path.display()))?;
    let Some(stem) = name.strip_suffix("_noisy.npy") else {
        bail!("{} is not a noise realization (expected *_noisy.npy)", noisy_path.display());
    };
    let sibling = |suffix: &str| noisy_path.with_file_name(format!("{stem}_{suffix}.npy"));
    let load = |p: PathBuf| -> Result<Array2<f64>> {
        read_array(&p)
            .and_then(|a| a.to_plane())
            .with_context(|| format!("reading {}", p.display()))
    };
    let noisy_image = load(noisy_path.to_path_buf())?;
    let mask = load(sibling("mask"))?.mapv(|v| v != 0.0);
    let re = load(sibling("spec_re"))?;
    let im = load(sibling("spec_im"))?;
    let dim = noisy_image.dim();
    if mask.dim() != dim || re.dim() != dim || im.dim() != dim {
        bail!("realization files for {} disagree in shape", noisy_path.display());
    }
    let raw_spectrum = Array2::from_shape_fn(dim, |ij| Complex64::new(re[ij], im[ij]));
    Ok(NoiseRealization {
        noisy_image,
        mask,
        raw_spectrum,
        lambda_used: lambda,
    })
}

/// Realizations behind every plane of a noisy stack.
pub fn stack_realizations(loaded: &LoadedStack, lambda: f64) -> Result<Vec<NoiseRealization>> {
    loaded.plane_paths.iter().map(|p| read_realization(p, lambda)).collect()
}

/// Lambda recorded by the noise command next to a noisy manifest, or NaN.
pub fn recorded_lambda(manifest: &Path) -> f64 {
    let summary = base_dir(manifest).join(crate::commands::noise::SUMMARY);
    std::fs::read_to_string(summary)
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v["lambda"].as_f64())
        .unwrap_or(f64::NAN)
}

/// Pairs stacks of `a` and `b` by id, in the order of `a`.
pub fn pair_by_id<'a>(a: &'a [LoadedStack], b: &'a [LoadedStack], what: &str) -> Result<Vec<(&'a LoadedStack, &'a LoadedStack)>> {
    let index: HashMap<&str, &LoadedStack> = b.iter().map(|s| (s.manifest.id.as_str(), s)).collect();
    a.iter()
        .map(|s| {
            index
                .get(s.manifest.id.as_str())
                .map(|t| (s, *t))
                .ok_or_else(|| anyhow!("stack '{}' has no counterpart in the {what} manifest", s.manifest.id))
        })
        .collect()
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    stackdenoise::dataio::write_atomic(path, text.as_bytes())?;
    Ok(())
}
