use ndarray::Array2;

use crate::error::{Error, Result};
use crate::stack::{ImageStack, Plane};
use crate::stats::{median, percentile};

/// Number of planes kept when trimming a full-length MRI volume.
pub const MRI_MIDDLE_PLANES: usize = 100;
/// Plane count of a full MRI volume; only such stacks are trimmed.
pub const MRI_FULL_PLANES: usize = 150;

/// Scales one plane to `[-0.5, 0.5]` by its own min and max.
pub fn scale_plane_mri(plane: &Plane) -> Result<Plane> {
    let min = plane.iter().copied().fold(f64::INFINITY, f64::min);
    let max = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::Degenerate("constant MRI plane cannot be min-max scaled".into()));
    }
    let range = max - min;
    Ok(plane.mapv(|v| (v - min) / range - 0.5))
}

/// Per-plane `[-0.5, 0.5]` scaling; 150-plane volumes are trimmed to
/// their middle 100 planes (indices 25..125).
pub fn preprocess_mri(stack: &ImageStack) -> Result<ImageStack> {
    let planes = stack.planes();
    let kept = if planes.len() == MRI_FULL_PLANES {
        let start = (MRI_FULL_PLANES - MRI_MIDDLE_PLANES) / 2;
        &planes[start..start + MRI_MIDDLE_PLANES]
    } else {
        planes
    };
    let scaled = kept.iter().map(scale_plane_mri).collect::<Result<Vec<_>>>()?;
    ImageStack::new(stack.id(), scaled)
}

/// Pixelwise median over every plane of every stack.
pub fn background_median(stacks: &[ImageStack]) -> Result<Array2<f64>> {
    let first = stacks
        .first()
        .ok_or_else(|| Error::InvalidStack("background needs at least one image".into()))?;
    let dim = first.dim();
    let planes: Vec<&Plane> = stacks.iter().flat_map(|s| s.planes()).collect();
    if let Some(p) = planes.iter().find(|p| p.dim() != dim) {
        return Err(Error::ShapeMismatch {
            expected: vec![dim.0, dim.1],
            found: vec![p.dim().0, p.dim().1],
        });
    }
    let mut column = vec![0.0; planes.len()];
    Ok(Array2::from_shape_fn(dim, |ij| {
        column.iter_mut().zip(&planes).for_each(|(c, p)| *c = p[ij]);
        median(&mut column)
    }))
}

/// Normalizes `plane` so its 3rd / 99.8th percentiles map to 0 / 1.
pub fn percentile_normalize(plane: &Plane, low: f64, high: f64) -> Result<Plane> {
    let values: Vec<f64> = plane.iter().copied().collect();
    let lo = percentile(&values, low);
    let hi = percentile(&values, high);
    if !(hi > lo) {
        return Err(Error::Degenerate(format!(
            "percentiles {low} and {high} coincide at {lo}"
        )));
    }
    Ok(plane.mapv(|v| (v - lo) / (hi - lo)))
}

/// Subtracts the per-modality camera background (median over all images)
/// and percentile-normalizes each image. Returns the stacks and the
/// background.
pub fn preprocess_microscopy(stacks: &[ImageStack]) -> Result<(Vec<ImageStack>, Array2<f64>)> {
    let background = background_median(stacks)?;
    let out = stacks
        .iter()
        .map(|s| {
            let planes = s
                .planes()
                .iter()
                .map(|p| percentile_normalize(&(p - &background), 3.0, 99.8))
                .collect::<Result<Vec<_>>>()?;
            ImageStack::new(s.id(), planes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, background))
}
