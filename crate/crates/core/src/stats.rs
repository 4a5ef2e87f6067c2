//! Small descriptive statistics shared by preprocessing and reporting.

use serde::{Deserialize, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Linear-interpolation quantile (`q` in percent) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    percentile_sorted(&sorted, q)
}

pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty slice");
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    percentile_sorted(values, 50.0)
}

/// Mean with a two-sided 95% Student-t confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(serialize_with = "serialize_extended_f64")]
    pub mean: f64,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub ci_low: f64,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub ci_high: f64,
    pub count: usize,
}

impl Interval {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        if n < 2 || !mean.is_finite() {
            return Self {
                mean,
                ci_low: mean,
                ci_high: mean,
                count: n,
            };
        }
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        let half = t * (var / n as f64).sqrt();
        Self {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
            count: n,
        }
    }
}

/// Writes non-finite values as the strings `"inf"`, `"-inf"` or `"nan"`.
pub fn serialize_extended_f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&format_extended(*v))
    }
}

pub fn format_extended(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_matches_linear_rule() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert_eq!(percentile(&v, 50.0), 2.5);
        assert!((percentile(&v, 10.0) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn median_of_three() {
        assert_eq!(median(&mut [1.0, 100.0, 2.0]), 2.0);
    }

    #[test]
    fn interval_single_sample_is_degenerate() {
        let i = Interval::from_samples(&[3.5]);
        assert_eq!((i.mean, i.ci_low, i.ci_high), (3.5, 3.5, 3.5));
    }

    #[test]
    fn interval_known_t_value() {
        // n = 2: t_{0.975, 1} = 12.7062
        let i = Interval::from_samples(&[1.0, 3.0]);
        let half = i.ci_high - i.mean;
        assert!((half - 12.7062047 * 1.0).abs() < 1e-4, "{half}");
    }
}
