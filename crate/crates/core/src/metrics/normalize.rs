use ndarray::Array2;

use crate::error::{shape_mismatch, Error, Result};
use crate::stats::percentile;

#[derive(Debug, Clone, PartialEq)]
pub struct MicroscopyFit {
    pub gt_norm: Array2<f64>,
    pub pred_fit: Array2<f64>,
    pub scale: f64,
    pub offset: f64,
    /// Set when the prediction is constant and the scale is undefined.
    pub degenerate_prediction: bool,
}

/// Percentile-normalizes the ground truth to its 0.1 / 99.9 percentiles,
/// then fits `scale * pred + offset` to it by least squares.
pub fn normalize_for_metrics_microscopy(gt: &Array2<f64>, pred: &Array2<f64>) -> Result<MicroscopyFit> {
    if gt.dim() != pred.dim() {
        let (a, b) = (gt.dim(), pred.dim());
        return Err(shape_mismatch(&[a.0, a.1], &[b.0, b.1]));
    }
    let values: Vec<f64> = gt.iter().copied().collect();
    let lo = percentile(&values, 0.1);
    let hi = percentile(&values, 99.9);
    if !(hi > lo) {
        return Err(Error::Degenerate(
            "ground truth percentiles 0.1 and 99.9 coincide".into(),
        ));
    }
    let gt_norm = gt.mapv(|v| (v - lo) / (hi - lo));
    let (scale, offset, degenerate) = affine_fit(pred, &gt_norm);
    Ok(MicroscopyFit {
        pred_fit: pred.mapv(|v| scale * v + offset),
        gt_norm,
        scale,
        offset,
        degenerate_prediction: degenerate,
    })
}

/// Closed-form minimizer of `sum (a * x + b - y)^2`.
fn affine_fit(x: &Array2<f64>, y: &Array2<f64>) -> (f64, f64, bool) {
    let n = x.len() as f64;
    let mx = x.sum() / n;
    let my = y.sum() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y.iter()) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    if sxx == 0.0 {
        return (0.0, my, true);
    }
    let a = sxy / sxx;
    (a, my - a * mx, false)
}
