//! Image quality metrics and the evaluation protocol.

mod normalize;
mod quality;
mod report;

pub use normalize::{normalize_for_metrics_microscopy, MicroscopyFit};
pub use quality::{gaussian_window, mse, nrmse, psnr, ssim, MetricConfig, Protocol};
pub use report::{evaluate_stack, evaluate_stacks, MetricReport, MetricRow, MetricSummary};
