use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use serde::Serialize;
use stackdenoise::metrics::MetricConfig;
use stackdenoise::stack::neighbor_similarity_report;

use crate::files::{load_manifest_stacks, write_json};

/// SSIM between adjacent planes, and between planes `--distance` apart.
#[derive(Debug, Clone, clap::Args)]
pub struct NeighborSsimArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Plane distance for the distant-pair comparison.
    #[arg(long, default_value_t = 8)]
    pub distance: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct StackSimilarity {
    id: String,
    adjacent_mean: f64,
    distant_mean: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    distance: usize,
    adjacent_mean: f64,
    distant_mean: Option<f64>,
    stacks: Vec<StackSimilarity>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn run(args: &NeighborSsimArgs) -> Result<()> {
    let stacks = load_manifest_stacks(&args.manifest)?;
    let cfg = MetricConfig::default();
    let mut csv = String::from("id,plane_i,plane_j,ssim,residual_mean,residual_std\n");
    let (mut all_adj, mut all_far, mut per_stack) = (Vec::new(), Vec::new(), Vec::new());
    for s in &stacks {
        let rows = neighbor_similarity_report(&s.stack, &[args.distance], &cfg)?;
        let (mut adj, mut far) = (Vec::new(), Vec::new());
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                s.manifest.id, r.plane_i, r.plane_j, r.ssim, r.residual_mean, r.residual_std
            );
            match r.plane_j - r.plane_i {
                1 => adj.push(r.ssim),
                d if d == args.distance => far.push(r.ssim),
                _ => {}
            }
        }
        per_stack.push(StackSimilarity {
            id: s.manifest.id.clone(),
            adjacent_mean: mean(&adj).unwrap_or(f64::NAN),
            distant_mean: mean(&far),
        });
        all_adj.extend(adj);
        all_far.extend(far);
    }
    std::fs::create_dir_all(&args.out)?;
    stackdenoise::dataio::write_atomic(&args.out.join("neighbor_ssim.csv"), csv.as_bytes())?;
    write_json(
        &args.out.join("summary.json"),
        &Summary {
            distance: args.distance,
            adjacent_mean: mean(&all_adj).unwrap_or(f64::NAN),
            distant_mean: mean(&all_far),
            stacks: per_stack,
        },
    )
}
