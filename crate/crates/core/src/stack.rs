//! Image stacks and the neighbor-plane sampler.
//!
//! A stack is an ordered list of co-registered planes. The sampler turns a
//! plane index into a training example: the target plane plus its
//! neighbors at offsets `-K..=K`, either including a copy of the target
//! (copy-supervised) or holding it out (self-supervised). Neighbors that
//! fall outside the stack are mirrored back inside it.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::metrics::{ssim, MetricConfig};

/// A single 2D plane, row-major `(height, width)`.
pub type Plane = Array2<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    id: String,
    planes: Vec<Plane>,
    plane_spacing: Option<f64>,
}

impl ImageStack {
    pub fn new(id: impl Into<String>, planes: Vec<Plane>) -> Result<Self> {
        let id = id.into();
        let Some(first) = planes.first() else {
            return Err(Error::InvalidStack(format!("stack '{id}' has no planes")));
        };
        let dim = first.dim();
        if dim.0 == 0 || dim.1 == 0 {
            return Err(Error::InvalidStack(format!("stack '{id}' has empty planes")));
        }
        for (i, p) in planes.iter().enumerate() {
            if p.dim() != dim {
                return Err(shape_mismatch(&[dim.0, dim.1], &[p.dim().0, p.dim().1]));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("stack '{id}' plane {i}")));
            }
        }
        Ok(Self {
            id,
            planes,
            plane_spacing: None,
        })
    }

    pub fn with_spacing(mut self, spacing: f64) -> Self {
        self.plane_spacing = Some(spacing);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn plane(&self, i: usize) -> &Plane {
        &self.planes[i]
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    /// `(height, width)` shared by every plane.
    pub fn dim(&self) -> (usize, usize) {
        self.planes[0].dim()
    }

    pub fn plane_spacing(&self) -> Option<f64> {
        self.plane_spacing
    }

    pub fn into_planes(self) -> Vec<Plane> {
        self.planes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// A copy of the target plane is part of the input.
    CopySupervised,
    /// The target plane is held out; only neighbors are inputs.
    SelfSupervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub neighbors_per_side: usize,
    pub mode: SamplerMode,
}

impl SamplerConfig {
    pub fn new(neighbors_per_side: usize, mode: SamplerMode) -> Result<Self> {
        let cfg = Self {
            neighbors_per_side,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn copy_supervised(neighbors_per_side: usize) -> Self {
        Self {
            neighbors_per_side,
            mode: SamplerMode::CopySupervised,
        }
    }

    pub fn self_supervised(neighbors_per_side: usize) -> Result<Self> {
        Self::new(neighbors_per_side, SamplerMode::SelfSupervised)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == SamplerMode::SelfSupervised && self.neighbors_per_side == 0 {
            return Err(Error::InvalidConfig(
                "self-supervised sampling needs at least one neighbor per side".into(),
            ));
        }
        Ok(())
    }

    /// Number of planes fed to the network: `2K + 1` or `2K`.
    pub fn input_planes(&self) -> usize {
        match self.mode {
            SamplerMode::CopySupervised => 2 * self.neighbors_per_side + 1,
            SamplerMode::SelfSupervised => 2 * self.neighbors_per_side,
        }
    }

    /// Plane offsets in channel order, strictly increasing.
    pub fn offsets(&self) -> Vec<isize> {
        let k = self.neighbors_per_side as isize;
        (-k..=k)
            .filter(|&d| d != 0 || self.mode == SamplerMode::CopySupervised)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SampledExample {
    pub input_planes: Vec<Plane>,
    pub target_plane: Plane,
    pub target_index: usize,
    /// Resolved stack indices of `input_planes`, after margin mirroring.
    pub input_indices: Vec<usize>,
    pub source_stack_id: String,
}

/// Resolves `i + offset` inside a stack of `planes` planes.
///
/// Out-of-range indices are mirrored about `i` (`i - offset`); if the
/// mirror is also outside the stack the result is clamped.
pub fn reflect_index(i: usize, offset: isize, planes: usize) -> Result<usize> {
    if i >= planes {
        return Err(Error::IndexOutOfRange { index: i, planes });
    }
    if offset == 0 {
        return Ok(i);
    }
    if planes < 2 {
        return Err(Error::InvalidStack(
            "a single-plane stack has no neighbors to sample".into(),
        ));
    }
    let p = planes as isize;
    let i = i as isize;
    let direct = i + offset;
    if (0..p).contains(&direct) {
        return Ok(direct as usize);
    }
    let mirrored = i - offset;
    if (0..p).contains(&mirrored) {
        return Ok(mirrored as usize);
    }
    Ok(direct.clamp(0, p - 1) as usize)
}

/// Builds the training example for plane `i`.
///
/// Inputs come from `stack_in` (including the center copy in copy mode),
/// the target from `stack_target`. For self-supervised training pass the
/// same stack twice.
pub fn sample_example(
    stack_in: &ImageStack,
    stack_target: &ImageStack,
    i: usize,
    cfg: &SamplerConfig,
) -> Result<SampledExample> {
    cfg.validate()?;
    if stack_in.len() != stack_target.len() || stack_in.dim() != stack_target.dim() {
        let (h, w) = stack_in.dim();
        let (th, tw) = stack_target.dim();
        return Err(shape_mismatch(
            &[stack_in.len(), h, w],
            &[stack_target.len(), th, tw],
        ));
    }
    let planes = stack_in.len();
    if i >= planes {
        return Err(Error::IndexOutOfRange { index: i, planes });
    }
    let input_indices = cfg
        .offsets()
        .into_iter()
        .map(|d| reflect_index(i, d, planes))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampledExample {
        input_planes: input_indices
            .iter()
            .map(|&j| stack_in.plane(j).clone())
            .collect(),
        target_plane: stack_target.plane(i).clone(),
        target_index: i,
        input_indices,
        source_stack_id: stack_in.id().to_string(),
    })
}

/// Seed-deterministic shuffled order of every `(pair index, plane index)`.
pub fn enumerate_epoch(stack_pairs: &[(ImageStack, ImageStack)], rng_seed: u64) -> Vec<(usize, usize)> {
    let counts: Vec<usize> = stack_pairs.iter().map(|(a, _)| a.len()).collect();
    enumerate_epoch_counts(&counts, rng_seed)
}

pub(crate) fn enumerate_epoch_counts(plane_counts: &[usize], rng_seed: u64) -> Vec<(usize, usize)> {
    let mut order: Vec<(usize, usize)> = plane_counts
        .iter()
        .enumerate()
        .flat_map(|(s, &p)| (0..p).map(move |i| (s, i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub plane_i: usize,
    pub plane_j: usize,
    pub ssim: f64,
    pub residual_mean: f64,
    pub residual_std: f64,
}

/// SSIM and residual statistics between all adjacent planes, followed by
/// every pair `(i, i + d)` for each distance in `distant_offsets`.
pub fn neighbor_similarity_report(
    stack: &ImageStack,
    distant_offsets: &[usize],
    cfg: &MetricConfig,
) -> Result<Vec<SimilarityRow>> {
    let p = stack.len();
    if p < 2 {
        return Err(Error::InvalidStack(
            "neighbor similarity needs at least two planes".into(),
        ));
    }
    let mut pairs: Vec<(usize, usize)> = (0..p - 1).map(|i| (i, i + 1)).collect();
    for &d in distant_offsets.iter().filter(|&&d| d > 1) {
        pairs.extend((0..p.saturating_sub(d)).map(|i| (i, i + d)));
    }
    pairs
        .into_iter()
        .map(|(i, j)| {
            let a = stack.plane(i);
            let b = stack.plane(j);
            let residual = b - a;
            let n = residual.len() as f64;
            let mean = residual.sum() / n;
            let var = residual.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
            Ok(SimilarityRow {
                plane_i: i,
                plane_j: j,
                ssim: ssim(a, b, cfg)?,
                residual_mean: mean,
                residual_std: var.sqrt(),
            })
        })
        .collect()
}
