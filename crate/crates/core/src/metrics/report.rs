use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::normalize::normalize_for_metrics_microscopy;
use super::quality::{nrmse, psnr, ssim, MetricConfig, Protocol};
use crate::error::{shape_mismatch, Error, Result};
use crate::stack::ImageStack;
use crate::stats::{format_extended, serialize_extended_f64, Interval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub id: String,
    pub plane: usize,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub nrmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub psnr_db: Interval,
    pub ssim: Interval,
    pub nrmse: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub protocol: Protocol,
    pub rows: Vec<MetricRow>,
    pub summary: MetricSummary,
    /// Notes such as planes whose prediction was constant under the
    /// microscopy affine fit.
    pub flags: Vec<String>,
}

impl MetricReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,plane,psnr_db,ssim,nrmse\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.id,
                r.plane,
                format_extended(r.psnr_db),
                format_extended(r.ssim),
                format_extended(r.nrmse)
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::dataio::write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }

    /// Aggregate-only JSON (summary and flags).
    pub fn write_summary_json(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Aggregate<'a> {
            protocol: Protocol,
            planes: usize,
            summary: &'a MetricSummary,
            flags: &'a [String],
        }
        let agg = Aggregate {
            protocol: self.protocol,
            planes: self.rows.len(),
            summary: &self.summary,
            flags: &self.flags,
        };
        let text = serde_json::to_string_pretty(&agg)?;
        crate::dataio::write_atomic(path.as_ref(), text.as_bytes())
    }
}

fn plane_metrics(
    gt: &ndarray::Array2<f64>,
    pred: &ndarray::Array2<f64>,
    cfg: &MetricConfig,
    flags: &mut Vec<String>,
    label: impl FnOnce() -> String,
) -> Result<(f64, f64, f64)> {
    match cfg.protocol {
        Protocol::Mri | Protocol::Raw => Ok((psnr(gt, pred, cfg)?, ssim(gt, pred, cfg)?, nrmse(gt, pred, cfg)?)),
        Protocol::Microscopy => {
            let fit = normalize_for_metrics_microscopy(gt, pred)?;
            if fit.degenerate_prediction {
                flags.push(format!("{}: constant prediction, affine scale set to 0", label()));
            }
            let (g, p) = (&fit.gt_norm, &fit.pred_fit);
            Ok((psnr(g, p, cfg)?, ssim(g, p, cfg)?, nrmse(g, p, cfg)?))
        }
    }
}

fn summarize(rows: &[MetricRow], groups: Option<&[std::ops::Range<usize>]>) -> MetricSummary {
    let column = |f: fn(&MetricRow) -> f64| -> Interval {
        match groups {
            Some(groups) if groups.len() > 1 => {
                let means: Vec<f64> = groups
                    .iter()
                    .map(|g| rows[g.clone()].iter().map(f).sum::<f64>() / g.len() as f64)
                    .collect();
                let mut iv = Interval::from_samples(&means);
                iv.mean = rows.iter().map(f).sum::<f64>() / rows.len() as f64;
                iv
            }
            _ => Interval::from_samples(&rows.iter().map(f).collect::<Vec<_>>()),
        }
    };
    MetricSummary {
        psnr_db: column(|r| r.psnr_db),
        ssim: column(|r| r.ssim),
        nrmse: column(|r| r.nrmse),
    }
}

/// Per-plane metrics for one stack; the interval is taken over planes.
pub fn evaluate_stack(gt: &ImageStack, pred: &ImageStack, cfg: &MetricConfig) -> Result<MetricReport> {
    evaluate_stacks(&[(gt.clone(), pred.clone())], cfg)
}

/// Per-plane metrics over several stacks. The reported mean is the mean of
/// all rows; with more than one stack the 95% interval is a t-interval
/// over per-stack means, otherwise over planes.
pub fn evaluate_stacks(pairs: &[(ImageStack, ImageStack)], cfg: &MetricConfig) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidStack("no stacks to evaluate".into()));
    }
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    let mut groups = Vec::new();
    for (gt, pred) in pairs {
        if gt.len() != pred.len() || gt.dim() != pred.dim() {
            let (a, b) = (gt.dim(), pred.dim());
            return Err(shape_mismatch(&[gt.len(), a.0, a.1], &[pred.len(), b.0, b.1]));
        }
        let start = rows.len();
        for (i, (g, p)) in gt.planes().iter().zip(pred.planes()).enumerate() {
            let (psnr_db, ssim, nrmse) = plane_metrics(g, p, cfg, &mut flags, || format!("{} plane {i}", gt.id()))?;
            rows.push(MetricRow {
                id: gt.id().to_string(),
                plane: i,
                psnr_db,
                ssim,
                nrmse,
            });
        }
        groups.push(start..rows.len());
    }
    Ok(MetricReport {
        protocol: cfg.protocol,
        summary: summarize(&rows, Some(&groups)),
        rows,
        flags,
    })
}
