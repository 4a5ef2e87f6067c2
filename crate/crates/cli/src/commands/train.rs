use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use stackdenoise::dataio::Split;
use stackdenoise::nnet::{save_params, NetworkGraph};
use stackdenoise::trainer::{train, EpochRecord};
use stackdenoise::{ImageStack, SamplerMode};

use crate::config::RunConfig;
use crate::files::{load_manifest_stacks, pair_by_id, write_json, LoadedStack};

pub const MODEL: &str = "model.ckpt";
pub const HISTORY: &str = "history.json";
pub const HISTORY_CSV: &str = "history.csv";
pub const RUN_CONFIG: &str = "run_config.json";

/// Train a denoiser from a run configuration. Flags override the file.
#[derive(Debug, Clone, clap::Args)]
pub struct TrainArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for initialization, shuffling and augmentation.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate of the cosine schedule.
    #[arg(long)]
    pub lr0: Option<f64>,
    /// Noisy input manifest (overrides `data.manifest`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Second noisy copy used as target in copy-supervised mode.
    #[arg(long)]
    pub target_manifest: Option<PathBuf>,
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::from_file(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(lr) = self.lr0 {
            cfg.train.lr0 = lr;
        }
        if let Some(m) = &self.manifest {
            cfg.data.manifest = m.clone();
        }
        if let Some(t) = &self.target_manifest {
            cfg.data.target_manifest = Some(t.clone());
        }
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    best_epoch: usize,
    best_val_mse: Option<f64>,
    parameter_count: usize,
    train_stacks: Vec<String>,
    val_stacks: Vec<String>,
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_mse,val_mse,lr\n");
    for r in history {
        let val = r.val_mse.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.train_mse, val, r.lr);
    }
    out
}

type Pairs = Vec<(ImageStack, ImageStack)>;

/// `(input, target)` pairs per split. Copy-supervised runs take targets
/// from the second copy; self-supervised runs use one stack for both.
fn split_pairs(cfg: &RunConfig) -> Result<(Pairs, Pairs)> {
    let inputs = load_manifest_stacks(&cfg.data.manifest)?;
    let targets: Option<Vec<LoadedStack>> = match (cfg.sampler.mode, &cfg.data.target_manifest) {
        (SamplerMode::CopySupervised, None) => {
            bail!("copy-supervised training needs data.target_manifest (a second noisy copy)")
        }
        (SamplerMode::CopySupervised, Some(t)) => Some(load_manifest_stacks(t)?),
        (SamplerMode::SelfSupervised, _) => None,
    };
    let pairs: Vec<(&LoadedStack, &LoadedStack)> = match &targets {
        Some(t) => pair_by_id(&inputs, t, "target")?,
        None => inputs.iter().map(|s| (s, s)).collect(),
    };
    let take = |split: Split| -> Pairs {
        pairs
            .iter()
            .filter(|(a, _)| a.manifest.split == split)
            .map(|(a, b)| (a.stack.clone(), b.stack.clone()))
            .collect()
    };
    Ok((take(Split::Train), take(Split::Val)))
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let (train_pairs, val_pairs) = split_pairs(&cfg)?;
    if train_pairs.is_empty() {
        bail!("manifest {} has no stacks in the train split", cfg.data.manifest.display());
    }
    let mut net = NetworkGraph::<f32>::build(cfg.model.variant, cfg.model.n_in, cfg.model.width_scale)?;
    net.init_he(cfg.train.seed);
    let outcome = train(&train_pairs, &val_pairs, &mut net, &cfg.train).context("training")?;

    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    save_params(&net, out.join(MODEL))?;
    write_json(&out.join(HISTORY), &outcome.history)?;
    stackdenoise::dataio::write_atomic(&out.join(HISTORY_CSV), history_csv(&outcome.history).as_bytes())?;
    write_json(&out.join(RUN_CONFIG), &cfg)?;
    write_json(
        &out.join("summary.json"),
        &TrainSummary {
            best_epoch: outcome.best_epoch,
            best_val_mse: outcome.history[outcome.best_epoch].val_mse,
            parameter_count: net.parameter_count(),
            train_stacks: train_pairs.iter().map(|(a, _)| a.id().to_string()).collect(),
            val_stacks: val_pairs.iter().map(|(a, _)| a.id().to_string()).collect(),
        },
    )
}
