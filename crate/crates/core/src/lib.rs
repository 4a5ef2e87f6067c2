//! Multiplane denoising with neighbor-plane sampling.
//!
//! The crate covers the whole pipeline: stacks and the neighbor sampler
//! ([`stack`]), k-space undersampling noise and data consistency
//! ([`kspace`]), a small U-Net runtime with reverse-mode gradients
//! ([`nnet`]), the training loop ([`trainer`]), image quality metrics
//! ([`metrics`]) and file formats, preprocessing and phantoms ([`dataio`]).

pub mod dataio;
pub mod error;
pub mod kspace;
pub mod metrics;
pub mod nnet;
pub mod stack;
pub mod trainer;
pub mod stats;

pub use error::{Error, Result};
pub use stack::{ImageStack, Plane, SamplerConfig, SamplerMode};
