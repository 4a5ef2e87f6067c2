use std::path::PathBuf;

use anyhow::{bail, Result};
use stackdenoise::kspace::combine_copies;
use stackdenoise::ImageStack;

use crate::files::{load_manifest_stacks, pair_by_id, recorded_lambda, stack_realizations, write_stacks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BaselineMode {
    /// The noisy reconstructions themselves.
    Direct,
    /// Spectra of two noisy copies merged.
    Combine,
}

/// Reference predictions that involve no training.
#[derive(Debug, Clone, clap::Args)]
pub struct BaselineArgs {
    /// Noisy manifest written by `noise`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub mode: BaselineMode,
    /// Second noisy copy, required by `--mode combine`.
    #[arg(long)]
    pub second: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &BaselineArgs) -> Result<()> {
    let first = load_manifest_stacks(&args.manifest)?;
    let stacks: Vec<_> = match args.mode {
        BaselineMode::Direct => first.iter().map(|s| (s.manifest.clone(), s.stack.clone())).collect(),
        BaselineMode::Combine => {
            let Some(second_path) = &args.second else {
                bail!("combine mode needs a second noisy copy (--second)");
            };
            let second = load_manifest_stacks(second_path)?;
            let (la, lb) = (recorded_lambda(&args.manifest), recorded_lambda(second_path));
            pair_by_id(&first, &second, "second-copy")?
                .into_iter()
                .map(|(a, b)| {
                    let (ra, rb) = (stack_realizations(a, la)?, stack_realizations(b, lb)?);
                    let planes = ra
                        .iter()
                        .zip(&rb)
                        .map(|(x, y)| combine_copies(x, y))
                        .collect::<stackdenoise::Result<Vec<_>>>()?;
                    Ok((a.manifest.clone(), ImageStack::new(a.stack.id(), planes)?))
                })
                .collect::<Result<_>>()?
        }
    };
    std::fs::create_dir_all(&args.out)?;
    write_stacks(&args.out, &stacks)?;
    Ok(())
}
