use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use stackdenoise::dataio::write_manifests;
use stackdenoise::kspace::{corrupt, NoiseSpec};

use crate::files::{load_manifest_stacks, stack_dir_name, write_json, write_realization, MANIFEST};
use crate::workers::{par_map, worker_count};

pub const SUMMARY: &str = "summary.json";

/// Undersample every plane in k-space and store the realizations.
#[derive(Debug, Clone, clap::Args)]
pub struct NoiseArgs {
    /// Manifest of the clean stacks.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Expected fraction of frequency bins kept, in (0, 1].
    #[arg(long, default_value_t = 0.10)]
    pub retain: f64,
    /// Base seed; each plane draws its mask from a seed derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct StackSummary {
    id: String,
    lambda: f64,
    mean_retained_fraction: f64,
    retained_fraction: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    retain_fraction: f64,
    seed: u64,
    /// Shared lambda when every stack has the same plane size.
    lambda: Option<f64>,
    mean_retained_fraction: f64,
    stacks: Vec<StackSummary>,
}

/// splitmix64 finalizer over the base seed and plane coordinates.
pub fn plane_seed(seed: u64, stack: usize, plane: usize) -> u64 {
    let mut z = seed
        .wrapping_add((stack as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((plane as u64 + 1).wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn run(args: &NoiseArgs) -> Result<()> {
    if !(args.retain > 0.0 && args.retain <= 1.0) {
        bail!("invalid retain fraction {}: must lie in (0, 1]", args.retain);
    }
    let stacks = load_manifest_stacks(&args.manifest)?;
    let workers = worker_count()?;

    let mut specs: BTreeMap<(usize, usize), NoiseSpec> = BTreeMap::new();
    for s in &stacks {
        let (h, w) = s.stack.dim();
        if let std::collections::btree_map::Entry::Vacant(e) = specs.entry((h, w)) {
            e.insert(NoiseSpec::calibrated(h, w, args.retain, args.seed)?);
        }
    }

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut manifests = Vec::with_capacity(stacks.len());
    let mut summaries = Vec::with_capacity(stacks.len());
    for (si, loaded) in stacks.iter().enumerate() {
        let spec = specs[&loaded.stack.dim()];
        let jobs: Vec<usize> = (0..loaded.stack.len()).collect();
        let realizations = par_map(&jobs, workers, |&i| {
            corrupt(loaded.stack.plane(i), &spec.with_seed(plane_seed(args.seed, si, i)))
        })
        .into_iter()
        .collect::<stackdenoise::Result<Vec<_>>>()?;

        let dir = stack_dir_name(&loaded.manifest.id);
        std::fs::create_dir_all(args.out.join(&dir))?;
        let mut files = Vec::with_capacity(realizations.len());
        for (i, r) in realizations.iter().enumerate() {
            let path = write_realization(&args.out.join(&dir), i, r)?;
            files.push(PathBuf::from(&dir).join(path.file_name().expect("file name")));
        }
        let fractions: Vec<f64> = realizations.iter().map(|r| r.retained_fraction()).collect();
        summaries.push(StackSummary {
            id: loaded.manifest.id.clone(),
            lambda: spec.lambda,
            mean_retained_fraction: fractions.iter().sum::<f64>() / fractions.len() as f64,
            retained_fraction: fractions,
        });
        manifests.push(stackdenoise::dataio::StackManifest {
            plane_files: files,
            ..loaded.manifest.clone()
        });
    }
    write_manifests(args.out.join(MANIFEST), &manifests)?;

    let all: Vec<f64> = summaries.iter().flat_map(|s| s.retained_fraction.iter().copied()).collect();
    let summary = Summary {
        retain_fraction: args.retain,
        seed: args.seed,
        lambda: (specs.len() == 1).then(|| specs.values().next().expect("one spec").lambda),
        mean_retained_fraction: all.iter().sum::<f64>() / all.len().max(1) as f64,
        stacks: summaries,
    };
    write_json(&args.out.join(SUMMARY), &summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_seeds_differ() {
        let mut seen = std::collections::HashSet::new();
        for s in 0..10 {
            for p in 0..50 {
                assert!(seen.insert(plane_seed(3, s, p)));
            }
        }
        assert_ne!(plane_seed(0, 0, 0), plane_seed(1, 0, 0));
    }
}
