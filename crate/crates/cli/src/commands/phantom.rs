use std::path::PathBuf;

use anyhow::Result;
use stackdenoise::dataio::{generate_phantom_stack, make_splits, preprocess_mri, Modality, PhantomSpec, Split, SplitRule, StackManifest};

use crate::files::write_stacks;

/// Synthetic clean stacks with slowly drifting structure.
#[derive(Debug, Clone, clap::Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 8)]
    pub stacks: usize,
    #[arg(long, default_value_t = 16)]
    pub planes: usize,
    /// Plane height and width.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Inter-plane drift; 0 gives identical planes.
    #[arg(long)]
    pub drift: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scale every plane to [-0.5, 0.5] as for MRI data.
    #[arg(long)]
    pub scale_mri: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &PhantomArgs) -> Result<()> {
    let defaults = PhantomSpec::default();
    let mut stacks = Vec::with_capacity(args.stacks);
    for s in 0..args.stacks {
        let spec = PhantomSpec {
            planes: args.planes,
            height: args.size,
            width: args.size,
            drift_rate: args.drift.unwrap_or(defaults.drift_rate),
            seed: args.seed + s as u64,
            ..defaults
        };
        let stack = generate_phantom_stack(&spec)?;
        stacks.push(if args.scale_mri { preprocess_mri(&stack)? } else { stack });
    }
    let mut manifests: Vec<StackManifest> = stacks
        .iter()
        .map(|s| StackManifest {
            id: s.id().to_string(),
            modality: Modality::Mri,
            plane_files: Vec::new(),
            split: Split::Train,
            height: args.size,
            width: args.size,
            planes: args.planes,
        })
        .collect();
    if manifests.len() >= 3 {
        make_splits(&manifests, SplitRule::Mri)?.apply(&mut manifests)?;
    }
    let pairs: Vec<_> = manifests.into_iter().zip(stacks).collect();
    std::fs::create_dir_all(&args.out)?;
    write_stacks(&args.out, &pairs)?;
    Ok(())
}
