use std::path::PathBuf;

use anyhow::Result;
use stackdenoise::metrics::{evaluate_stacks, MetricConfig};

use super::ProtocolArg;
use crate::files::{load_manifest_stacks, pair_by_id};

/// Per-plane PSNR, SSIM and NRMSE of predictions against ground truth.
#[derive(Debug, Clone, clap::Args)]
pub struct EvaluateArgs {
    /// Manifest of predicted stacks.
    #[arg(long)]
    pub pred: PathBuf,
    /// Manifest of ground-truth stacks, matched by id.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Mri)]
    pub protocol: ProtocolArg,
    /// CSV report path; the aggregate JSON is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let pred = load_manifest_stacks(&args.pred)?;
    let gt = load_manifest_stacks(&args.gt)?;
    let pairs: Vec<_> = pair_by_id(&pred, &gt, "ground-truth")?
        .into_iter()
        .map(|(p, g)| (g.stack.clone(), p.stack.clone()))
        .collect();
    let report = evaluate_stacks(&pairs, &MetricConfig::with_protocol(args.protocol.into()))?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    report.write_csv(&args.out)?;
    report.write_summary_json(args.out.with_extension("json"))?;
    Ok(())
}
