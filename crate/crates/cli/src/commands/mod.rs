pub mod baseline;
pub mod denoise;
pub mod evaluate;
pub mod noise;
pub mod phantom;
pub mod similarity;
pub mod train;

use stackdenoise::metrics::Protocol;
use stackdenoise::SamplerMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    /// Target copy plus neighbors as input.
    Copy,
    /// Neighbors only.
    #[value(name = "self")]
    SelfSupervised,
}

impl From<ModeArg> for SamplerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Copy => SamplerMode::CopySupervised,
            ModeArg::SelfSupervised => SamplerMode::SelfSupervised,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProtocolArg {
    Mri,
    /// Percentile-normalized ground truth, affinely fitted prediction.
    Microscopy,
    Raw,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Mri => Protocol::Mri,
            ProtocolArg::Microscopy => Protocol::Microscopy,
            ProtocolArg::Raw => Protocol::Raw,
        }
    }
}
