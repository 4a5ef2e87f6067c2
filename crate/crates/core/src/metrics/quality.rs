use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Metrics on the images as given.
    #[default]
    Mri,
    /// Percentile-normalized ground truth and affinely fitted prediction.
    Microscopy,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub data_range: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub ssim_k1: f64,
    pub ssim_k2: f64,
    pub protocol: Protocol,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            data_range: 1.0,
            ssim_window: 11,
            ssim_sigma: 1.5,
            ssim_k1: 0.01,
            ssim_k2: 0.03,
            protocol: Protocol::Mri,
        }
    }
}

impl MetricConfig {
    pub fn with_protocol(protocol: Protocol) -> Self {
        Self {
            protocol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.data_range > 0.0) {
            return Err(Error::InvalidConfig("data range must be positive".into()));
        }
        if self.ssim_window % 2 == 0 {
            return Err(Error::InvalidConfig("SSIM window size must be odd".into()));
        }
        Ok(())
    }
}

fn check_shapes(gt: &Array2<f64>, pred: &Array2<f64>) -> Result<()> {
    if gt.dim() != pred.dim() {
        let (a, b) = (gt.dim(), pred.dim());
        return Err(shape_mismatch(&[a.0, a.1], &[b.0, b.1]));
    }
    Ok(())
}

pub fn mse(gt: &Array2<f64>, pred: &Array2<f64>) -> Result<f64> {
    check_shapes(gt, pred)?;
    Ok(gt.iter().zip(pred.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / gt.len() as f64)
}

/// Peak signal-to-noise ratio in dB; `+inf` when the images are equal.
pub fn psnr(gt: &Array2<f64>, pred: &Array2<f64>, cfg: &MetricConfig) -> Result<f64> {
    cfg.validate()?;
    let mse = mse(gt, pred)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (cfg.data_range * cfg.data_range / mse).log10())
}

/// `||gt - pred|| / ||gt||`.
pub fn nrmse(gt: &Array2<f64>, pred: &Array2<f64>, _cfg: &MetricConfig) -> Result<f64> {
    check_shapes(gt, pred)?;
    let norm = gt.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Degenerate("NRMSE of an all-zero ground truth".into()));
    }
    let err = gt.iter().zip(pred.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(err / norm)
}

pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let w: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Mean structural similarity over every window position that lies fully
/// inside the image, with Gaussian window weights.
pub fn ssim(gt: &Array2<f64>, pred: &Array2<f64>, cfg: &MetricConfig) -> Result<f64> {
    cfg.validate()?;
    check_shapes(gt, pred)?;
    let win = cfg.ssim_window;
    let (h, w) = gt.dim();
    if h < win || w < win {
        return Err(Error::InvalidConfig(format!(
            "image {h}x{w} is smaller than the {win}x{win} SSIM window"
        )));
    }
    let g = gaussian_window(win, cfg.ssim_sigma);
    let c1 = (cfg.ssim_k1 * cfg.data_range).powi(2);
    let c2 = (cfg.ssim_k2 * cfg.data_range).powi(2);

    // moments are taken about one pixel's value, so constant images get
    // exactly zero variance and exactly their value as mean
    let (sx, sy) = (gt[[0, 0]], pred[[0, 0]]);
    let xc = gt.mapv(|v| v - sx);
    let yc = pred.mapv(|v| v - sy);

    let exx = filter_valid(&(&xc * &xc), &g);
    let eyy = filter_valid(&(&yc * &yc), &g);
    let exy = filter_valid(&(&xc * &yc), &g);
    let mcx = filter_valid(&xc, &g);
    let mcy = filter_valid(&yc, &g);

    let mut total = 0.0;
    for idx in 0..mcx.len() {
        let (mx, my) = (sx + mcx[idx], sy + mcy[idx]);
        let vx = exx[idx] - mcx[idx] * mcx[idx];
        let vy = eyy[idx] - mcy[idx] * mcy[idx];
        let cxy = exy[idx] - mcx[idx] * mcy[idx];
        let luminance = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
        let contrast_structure = (2.0 * cxy + c2) / (vx + vy + c2);
        total += luminance * contrast_structure;
    }
    Ok(total / mcx.len() as f64)
}

/// Separable "valid" correlation with a symmetric 1D kernel; returns the
/// flattened `(h - k + 1) x (w - k + 1)` result.
fn filter_valid(img: &Array2<f64>, kernel: &[f64]) -> Vec<f64> {
    let (h, w) = img.dim();
    let k = kernel.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let row = img.row(y);
        for x in 0..ow {
            rows[y * ow + x] = kernel.iter().enumerate().map(|(i, g)| g * row[x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel.iter().enumerate().map(|(i, g)| g * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}
