use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use stackdenoise::kspace::data_consistency;
use stackdenoise::metrics::{evaluate_stacks, MetricConfig, MetricSummary, Protocol};
use stackdenoise::nnet::from_checkpoint;
use stackdenoise::trainer::predict_stack;
use stackdenoise::{ImageStack, SamplerConfig, SamplerMode};

use super::{ModeArg, ProtocolArg};
use crate::config::RunConfig;
use crate::files::{load_manifest_stacks, pair_by_id, recorded_lambda, stack_realizations, write_json, write_stacks, LoadedStack};
use crate::workers::{par_map, worker_count};

/// Apply a trained model plane by plane.
#[derive(Debug, Clone, clap::Args)]
pub struct DenoiseArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Manifest of the noisy stacks to denoise.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write spectrally post-processed predictions (needs the noise
    /// realizations next to the noisy planes).
    #[arg(long)]
    pub post_process: bool,
    /// Neighbors per side; defaults to the run config stored with the model.
    #[arg(long)]
    pub neighbors: Option<usize>,
    /// Sampler mode; defaults to the run config stored with the model.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Clean manifest; when given, metric reports are written too.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Mri)]
    pub protocol: ProtocolArg,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
}

#[derive(Debug, Serialize)]
struct DenoiseReport {
    protocol: Protocol,
    planes: usize,
    before: MetricSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    after: Option<MetricSummary>,
}

fn resolve_sampler(args: &DenoiseArgs) -> Result<SamplerConfig> {
    let stored = args
        .model
        .parent()
        .map(|d| d.join(super::train::RUN_CONFIG))
        .filter(|p| p.is_file())
        .map(|p| RunConfig::from_file(&p).map(|c| c.sampler))
        .transpose()?;
    let neighbors = args
        .neighbors
        .or(stored.map(|s| s.neighbors_per_side))
        .ok_or_else(|| anyhow!("no sampler: pass --neighbors and --mode or keep run_config.json beside the model"))?;
    let mode = args
        .mode
        .map(SamplerMode::from)
        .or(stored.map(|s| s.mode))
        .ok_or_else(|| anyhow!("no sampler mode: pass --mode or keep run_config.json beside the model"))?;
    Ok(SamplerConfig::new(neighbors, mode)?)
}

fn report(gt: &[LoadedStack], preds: &[(LoadedStack, ImageStack)], cfg: &MetricConfig) -> Result<stackdenoise::metrics::MetricReport> {
    let pred_loaded: Vec<LoadedStack> = preds
        .iter()
        .map(|(l, p)| LoadedStack {
            stack: p.clone(),
            ..l.clone()
        })
        .collect();
    let pairs = pair_by_id(&pred_loaded, gt, "ground-truth")?
        .into_iter()
        .map(|(p, g)| (g.stack.clone(), p.stack.clone()))
        .collect::<Vec<_>>();
    Ok(evaluate_stacks(&pairs, cfg)?)
}

pub fn run(args: &DenoiseArgs) -> Result<()> {
    let net = from_checkpoint::<f32>(&args.model).with_context(|| format!("loading model {}", args.model.display()))?;
    let sampler = resolve_sampler(args)?;
    if net.n_in() != sampler.input_planes() {
        bail!(
            "model takes {} input planes but the sampler ({:?}, {} per side) produces {}; refusing to run",
            net.n_in(),
            sampler.mode,
            sampler.neighbors_per_side,
            sampler.input_planes()
        );
    }
    let stacks = load_manifest_stacks(&args.manifest)?;
    let workers = worker_count()?;
    let preds: Vec<(LoadedStack, ImageStack)> = par_map(&stacks, workers, |s| {
        predict_stack(&net, &s.stack, &sampler, args.batch_size).map(|p| (s.clone(), p))
    })
    .into_iter()
    .collect::<stackdenoise::Result<_>>()?;

    std::fs::create_dir_all(&args.out)?;
    let as_written = |v: &[(LoadedStack, ImageStack)]| -> Vec<_> {
        v.iter().map(|(l, p)| (l.manifest.clone(), p.clone())).collect()
    };
    write_stacks(&args.out.join("pred"), &as_written(&preds))?;

    let post = if args.post_process {
        let lambda = recorded_lambda(&args.manifest);
        let post = preds
            .iter()
            .map(|(l, p)| {
                let realizations = stack_realizations(l, lambda)?;
                let planes = p
                    .planes()
                    .iter()
                    .zip(&realizations)
                    .map(|(plane, r)| data_consistency(plane, r))
                    .collect::<stackdenoise::Result<Vec<_>>>()?;
                Ok((l.clone(), ImageStack::new(p.id(), planes)?))
            })
            .collect::<Result<Vec<_>>>()?;
        write_stacks(&args.out.join("post"), &as_written(&post))?;
        Some(post)
    } else {
        None
    };

    if let Some(gt_path) = &args.gt {
        let gt = load_manifest_stacks(gt_path)?;
        let cfg = MetricConfig::with_protocol(args.protocol.into());
        let before = report(&gt, &preds, &cfg)?;
        before.write_csv(args.out.join("report.csv"))?;
        let after = post.as_ref().map(|p| report(&gt, p, &cfg)).transpose()?;
        if let Some(a) = &after {
            a.write_csv(args.out.join("report_post.csv"))?;
        }
        write_json(
            &args.out.join("report.json"),
            &DenoiseReport {
                protocol: cfg.protocol,
                planes: before.rows.len(),
                before: before.summary,
                after: after.map(|a| a.summary),
            },
        )?;
    }
    Ok(())
}

/// Stack output directory of a denoise run.
pub fn predictions_manifest(out: &Path, post_processed: bool) -> PathBuf {
    out.join(if post_processed { "post" } else { "pred" }).join(crate::files::MANIFEST)
}
