use ndarray::Array2;
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fft::{conjugate_bin, dft2, frequency_radius, idft2};
use crate::error::{Error, Result};

/// Parameters of the Bernoulli frequency-undersampling noise model.
///
/// Each frequency `k` is kept with probability `exp(-lambda * |k|)`.
/// A negative `lambda` marks a spec that has not been calibrated yet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub retain_fraction: f64,
    #[serde(default = "uncalibrated")]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub symmetric_mask: bool,
}

fn uncalibrated() -> f64 {
    -1.0
}

fn default_true() -> bool {
    true
}

impl NoiseSpec {
    /// Spec with `lambda` left uncalibrated.
    pub fn new(retain_fraction: f64, seed: u64) -> Self {
        Self {
            retain_fraction,
            lambda: uncalibrated(),
            seed,
            symmetric_mask: true,
        }
    }

    /// Spec with `lambda` solved for an `h x w` frequency grid.
    pub fn calibrated(h: usize, w: usize, retain_fraction: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            lambda: calibrate_lambda(h, w, retain_fraction)?,
            ..Self::new(retain_fraction, seed)
        })
    }

    pub fn is_calibrated(&self) -> bool {
        self.lambda.is_finite() && self.lambda >= 0.0
    }

    /// Calibrates `lambda` for the given grid when it is not set yet.
    pub fn calibrate_for(mut self, h: usize, w: usize) -> Result<Self> {
        if !self.is_calibrated() {
            self.lambda = calibrate_lambda(h, w, self.retain_fraction)?;
        }
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    /// Inverse-probability weighted reconstruction fed to the network.
    pub noisy_image: Array2<f64>,
    pub mask: Array2<bool>,
    /// Unweighted spectrum values at sampled bins, zero elsewhere.
    pub raw_spectrum: Array2<Complex64>,
    pub lambda_used: f64,
}

impl NoiseRealization {
    pub fn retained_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }

    pub fn dim(&self) -> (usize, usize) {
        self.noisy_image.dim()
    }
}

/// Retention probability of every bin of an `h x w` grid.
pub fn retention_probabilities(h: usize, w: usize, lambda: f64) -> Array2<f64> {
    frequency_radius(h, w).mapv(|r| (-lambda * r).exp())
}

/// Solves `mean_k exp(-lambda |k|) = retain_fraction` by bisection.
pub fn calibrate_lambda(h: usize, w: usize, retain_fraction: f64) -> Result<f64> {
    if !(retain_fraction > 0.0 && retain_fraction <= 1.0) {
        return Err(Error::RetainFraction(retain_fraction));
    }
    if h == 0 || w == 0 {
        return Err(Error::InvalidConfig("empty frequency grid".into()));
    }
    if retain_fraction == 1.0 {
        return Ok(0.0);
    }
    let radius = frequency_radius(h, w);
    // the DC bin is always kept, which bounds the reachable fraction
    let floor = 1.0 / (h * w) as f64;
    if retain_fraction <= floor {
        return Err(Error::InvalidConfig(format!(
            "retain fraction {retain_fraction} is not reachable on a {h}x{w} grid (minimum {floor})"
        )));
    }
    let mean_p = |lambda: f64| radius.iter().map(|r| (-lambda * r).exp()).sum::<f64>() / radius.len() as f64;

    let mut lo = 0.0;
    let mut hi = 1.0;
    while mean_p(hi) > retain_fraction {
        hi *= 2.0;
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let f = mean_p(mid);
        if (f - retain_fraction).abs() < 1e-9 {
            break;
        }
        if f > retain_fraction {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Draws a Bernoulli frequency mask and builds the undersampled image.
pub fn corrupt(clean: &Array2<f64>, spec: &NoiseSpec) -> Result<NoiseRealization> {
    if !spec.is_calibrated() {
        return Err(Error::Uncalibrated(spec.lambda));
    }
    let (h, w) = clean.dim();
    let spectrum = dft2(clean)?;
    let prob = retention_probabilities(h, w, spec.lambda);
    let mask = draw_mask(&prob, spec.seed, spec.symmetric_mask);

    let raw_spectrum = Array2::from_shape_fn((h, w), |ij| {
        if mask[ij] {
            spectrum[ij]
        } else {
            Complex64::default()
        }
    });
    let weighted = Array2::from_shape_fn((h, w), |ij| raw_spectrum[ij] / prob[ij]);
    let image = idft2(&weighted)?;
    Ok(NoiseRealization {
        noisy_image: image.mapv(|v| v.re),
        mask,
        raw_spectrum,
        lambda_used: spec.lambda,
    })
}

fn draw_mask(prob: &Array2<f64>, seed: u64, symmetric: bool) -> Array2<bool> {
    let (h, w) = prob.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Array2::from_elem((h, w), false);
    for u in 0..h {
        for v in 0..w {
            if !symmetric {
                mask[[u, v]] = rng.random_bool(prob[[u, v]]);
                continue;
            }
            let (cu, cv) = conjugate_bin(u, v, h, w);
            // each conjugate pair is drawn once, at its first bin in row-major order
            if (cu, cv) < (u, v) {
                continue;
            }
            let keep = rng.random_bool(prob[[u, v]]);
            mask[[u, v]] = keep;
            mask[[cu, cv]] = keep;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: direct summation with per-axis distance `min(u, n - u)`.
    fn oracle_mean_p(h: usize, w: usize, lambda: f64) -> f64 {
        let mut acc = 0.0;
        for u in 0..h {
            for v in 0..w {
                let du = u.min(h - u) as f64;
                let dv = v.min(w - v) as f64;
                acc += (-lambda * (du * du + dv * dv).sqrt()).exp();
            }
        }
        acc / (h * w) as f64
    }

    fn smooth_image(h: usize, w: usize) -> Array2<f64> {
        Array2::from_shape_fn((h, w), |(y, x)| {
            let fy = y as f64 / h as f64;
            let fx = x as f64 / w as f64;
            0.3 * (2.0 * std::f64::consts::PI * fx).sin() + 0.2 * (4.0 * std::f64::consts::PI * fy).cos() + fx * fy
        })
    }

    #[test]
    fn full_retention_means_zero_lambda() {
        assert_eq!(calibrate_lambda(16, 16, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn dc_always_kept() {
        for lambda in [0.0, 0.5, 3.0, 40.0] {
            assert_eq!(retention_probabilities(8, 8, lambda)[[0, 0]], 1.0);
        }
    }

    #[test]
    fn calibration_matches_oracle() {
        let lambda = calibrate_lambda(64, 64, 0.10).unwrap();
        let p = oracle_mean_p(64, 64, lambda);
        assert!((0.0999..=0.1001).contains(&p), "{p}");
        assert!((p - 0.10).abs() < 1e-6);
    }

    #[test]
    fn calibration_rejects_bad_fraction() {
        assert!(matches!(calibrate_lambda(8, 8, 0.0), Err(Error::RetainFraction(_))));
        assert!(matches!(calibrate_lambda(8, 8, 1.5), Err(Error::RetainFraction(_))));
        assert!(calibrate_lambda(4, 4, 1.0 / 32.0).is_err());
    }

    #[test]
    fn calibration_is_monotone() {
        let fractions = [0.05, 0.1, 0.2, 0.4, 0.8, 1.0];
        let lambdas: Vec<f64> = fractions.iter().map(|&f| calibrate_lambda(32, 32, f).unwrap()).collect();
        assert!(lambdas.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn full_sampling_reproduces_clean() {
        let clean = smooth_image(16, 12);
        let spec = NoiseSpec::calibrated(16, 12, 1.0, 3).unwrap();
        let r = corrupt(&clean, &spec).unwrap();
        let err = (&r.noisy_image - &clean).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(err < 1e-10);
        assert!(r.mask.iter().all(|&m| m));
    }

    #[test]
    fn uncalibrated_spec_is_rejected() {
        let clean = smooth_image(8, 8);
        assert!(matches!(
            corrupt(&clean, &NoiseSpec::new(0.1, 0)),
            Err(Error::Uncalibrated(_))
        ));
    }

    #[test]
    fn mask_is_hermitian_and_image_real() {
        let clean = smooth_image(32, 32);
        let spec = NoiseSpec::calibrated(32, 32, 0.1, 11).unwrap();
        let r = corrupt(&clean, &spec).unwrap();
        for ((u, v), &m) in r.mask.indexed_iter() {
            assert_eq!(m, r.mask[conjugate_bin(u, v, 32, 32)]);
        }
        for ((u, v), x) in r.raw_spectrum.indexed_iter() {
            if !r.mask[[u, v]] {
                assert_eq!(*x, Complex64::default());
            }
        }
        let prob = retention_probabilities(32, 32, spec.lambda);
        let weighted = Array2::from_shape_fn((32, 32), |ij| r.raw_spectrum[ij] / prob[ij]);
        let full = idft2(&weighted).unwrap();
        let norm = r.noisy_image.iter().map(|v| v * v).sum::<f64>().sqrt();
        let imag = full.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        assert!(imag < 1e-9 * norm);
    }

    #[test]
    fn weighted_spectrum_is_unbiased() {
        let (h, w) = (32, 32);
        let clean = smooth_image(h, w) + Array2::from_shape_fn((h, w), |(y, x)| ((x * 13 + y * 7) % 5) as f64 * 0.05);
        let spec = NoiseSpec::calibrated(h, w, 0.1, 0).unwrap();
        let truth = dft2(&clean).unwrap();
        let prob = retention_probabilities(h, w, spec.lambda);
        let n = 500;
        let mut sum = Array2::<Complex64>::zeros((h, w));
        for s in 0..n {
            let r = corrupt(&clean, &spec.with_seed(1000 + s)).unwrap();
            sum = sum + Array2::from_shape_fn((h, w), |ij| r.raw_spectrum[ij] / prob[ij]);
        }
        let mut ok = 0;
        for ((u, v), total) in sum.indexed_iter() {
            let mean = total / n as f64;
            let p = prob[[u, v]];
            // Bernoulli(p) scaled by X / p has variance |X|^2 (1 - p) / p
            let se = (truth[[u, v]].norm_sqr() * (1.0 - p) / p / n as f64).sqrt();
            if (mean - truth[[u, v]]).norm() <= 3.0 * se + 1e-9 {
                ok += 1;
            }
        }
        let frac = ok as f64 / (h * w) as f64;
        assert!(frac >= 0.99, "{frac}");
    }

    #[test]
    fn realized_retention_near_target() {
        let spec = NoiseSpec::calibrated(128, 128, 0.1, 0).unwrap();
        let prob = retention_probabilities(128, 128, spec.lambda);
        let mean: f64 = (0..100)
            .map(|s| {
                let m = draw_mask(&prob, s, true);
                m.iter().filter(|&&b| b).count() as f64 / m.len() as f64
            })
            .sum::<f64>()
            / 100.0;
        assert!((0.095..=0.105).contains(&mean), "{mean}");
    }

    #[test]
    fn same_seed_same_mask() {
        let clean = smooth_image(16, 16);
        let spec = NoiseSpec::calibrated(16, 16, 0.2, 5).unwrap();
        assert_eq!(corrupt(&clean, &spec).unwrap(), corrupt(&clean, &spec).unwrap());
    }
}
