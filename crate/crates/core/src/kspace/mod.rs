//! Frequency-domain utilities: 2D DFTs, Bernoulli undersampling noise,
//! data-consistency post-processing and two-copy spectrum combination.

mod consistency;
mod fft;
mod noise;

pub use consistency::{combine_copies, data_consistency};
pub use fft::{conjugate_bin, dft2, frequency_radius, idft2, idft2_real, signed_frequency};
pub use noise::{calibrate_lambda, corrupt, retention_probabilities, NoiseRealization, NoiseSpec};
