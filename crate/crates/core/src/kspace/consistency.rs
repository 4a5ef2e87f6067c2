use ndarray::Array2;
use num_complex::Complex64;

use super::fft::{dft2, idft2_real};
use super::noise::NoiseRealization;
use crate::error::{shape_mismatch, Result};

/// Replaces the spectrum of `output` at every sampled bin with the
/// measured (unweighted) value.
pub fn data_consistency(output: &Array2<f64>, realization: &NoiseRealization) -> Result<Array2<f64>> {
    let dim = realization.dim();
    if output.dim() != dim {
        return Err(shape_mismatch(&[dim.0, dim.1], &[output.dim().0, output.dim().1]));
    }
    let mut spectrum = dft2(output)?;
    spectrum
        .iter_mut()
        .zip(realization.mask.iter().zip(realization.raw_spectrum.iter()))
        .filter(|(_, (&m, _))| m)
        .for_each(|(s, (_, raw))| *s = *raw);
    idft2_real(&spectrum)
}

/// Merges two independent realizations of the same image: the union of
/// their masks, averaging bins sampled by both.
pub fn combine_copies(a: &NoiseRealization, b: &NoiseRealization) -> Result<Array2<f64>> {
    let (da, db) = (a.dim(), b.dim());
    if da != db {
        return Err(shape_mismatch(&[da.0, da.1], &[db.0, db.1]));
    }
    let spectrum = Array2::from_shape_fn(da, |ij| match (a.mask[ij], b.mask[ij]) {
        (true, true) => (a.raw_spectrum[ij] + b.raw_spectrum[ij]) * 0.5,
        (true, false) => a.raw_spectrum[ij],
        (false, true) => b.raw_spectrum[ij],
        (false, false) => Complex64::default(),
    });
    idft2_real(&spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{corrupt, NoiseSpec};
    use crate::metrics::{psnr, MetricConfig};

    fn phantom(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let s = seed as f64;
        Array2::from_shape_fn((h, w), |(y, x)| {
            let (fy, fx) = (y as f64 / h as f64, x as f64 / w as f64);
            let blob = (-((fx - 0.5 - 0.05 * s.sin()).powi(2) + (fy - 0.45).powi(2)) / 0.05).exp();
            0.4 * blob + 0.1 * (2.0 * std::f64::consts::PI * (fx + 0.1 * s)).cos() - 0.2
        })
    }

    fn realization_with_mask(clean: &Array2<f64>, mask: Array2<bool>) -> NoiseRealization {
        let spectrum = dft2(clean).unwrap();
        let raw = Array2::from_shape_fn(clean.dim(), |ij| if mask[ij] { spectrum[ij] } else { Complex64::default() });
        NoiseRealization {
            noisy_image: idft2_real(&raw).unwrap(),
            mask,
            raw_spectrum: raw,
            lambda_used: 0.0,
        }
    }

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn full_mask_restores_clean() {
        let clean = phantom(16, 16, 1);
        let r = realization_with_mask(&clean, Array2::from_elem((16, 16), true));
        let garbage = Array2::from_shape_fn((16, 16), |(y, x)| (x * y) as f64);
        let out = data_consistency(&garbage, &r).unwrap();
        assert!(max_abs_diff(&out, &clean) < 1e-10);
    }

    #[test]
    fn empty_mask_keeps_output() {
        let clean = phantom(16, 16, 1);
        let r = realization_with_mask(&clean, Array2::from_elem((16, 16), false));
        let output = phantom(16, 16, 4);
        let out = data_consistency(&output, &r).unwrap();
        assert!(max_abs_diff(&out, &output) < 1e-12);
    }

    #[test]
    fn masked_bins_match_measurement_and_idempotent() {
        let clean = phantom(32, 32, 2);
        let spec = NoiseSpec::calibrated(32, 32, 0.1, 9).unwrap();
        let r = corrupt(&clean, &spec).unwrap();
        let output = phantom(32, 32, 7);
        let once = data_consistency(&output, &r).unwrap();
        let spectrum = dft2(&once).unwrap();
        for ((ij, s), &m) in spectrum.indexed_iter().zip(r.mask.iter()) {
            if m {
                let raw = r.raw_spectrum[ij];
                assert!((s - raw).norm() <= 1e-6 * raw.norm().max(1e-12) + 1e-12, "{ij:?}");
            }
        }
        let twice = data_consistency(&once, &r).unwrap();
        assert!(max_abs_diff(&once, &twice) < 1e-8);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let clean = phantom(8, 8, 0);
        let r = realization_with_mask(&clean, Array2::from_elem((8, 8), true));
        assert!(data_consistency(&Array2::zeros((8, 4)), &r).is_err());
        let other = realization_with_mask(&phantom(4, 4, 0), Array2::from_elem((4, 4), true));
        assert!(combine_copies(&r, &other).is_err());
    }

    #[test]
    fn identity_denoiser_improves_after_consistency() {
        let cfg = MetricConfig::default();
        let (mut before, mut after) = (0.0, 0.0);
        for seed in 0..5 {
            let clean = phantom(32, 32, seed);
            let spec = NoiseSpec::calibrated(32, 32, 0.1, seed).unwrap();
            let r = corrupt(&clean, &spec).unwrap();
            before += psnr(&clean, &r.noisy_image, &cfg).unwrap();
            after += psnr(&clean, &data_consistency(&r.noisy_image, &r).unwrap(), &cfg).unwrap();
        }
        assert!(after > before, "{after} <= {before}");
    }

    #[test]
    fn combining_identical_copies_is_zero_filled_reconstruction() {
        let clean = phantom(16, 16, 3);
        let r = corrupt(&clean, &NoiseSpec::calibrated(16, 16, 0.2, 1).unwrap()).unwrap();
        let combined = combine_copies(&r, &r).unwrap();
        let direct = idft2_real(&r.raw_spectrum).unwrap();
        assert!(max_abs_diff(&combined, &direct) < 1e-12);
    }

    #[test]
    fn disjoint_complementary_masks_recover_clean() {
        let clean = phantom(16, 16, 5);
        let half = Array2::from_shape_fn((16, 16), |(u, v)| (u + v) % 2 == 0);
        let a = realization_with_mask(&clean, half.clone());
        let b = realization_with_mask(&clean, half.mapv(|m| !m));
        let combined = combine_copies(&a, &b).unwrap();
        assert!(max_abs_diff(&combined, &clean) < 1e-8);
    }

    #[test]
    fn combining_beats_single_copy_on_average() {
        let cfg = MetricConfig::default();
        let (mut single, mut combined) = (0.0, 0.0);
        for seed in 0..8 {
            let clean = phantom(32, 32, seed);
            let spec = NoiseSpec::calibrated(32, 32, 0.1, 0).unwrap();
            let a = corrupt(&clean, &spec.with_seed(2 * seed)).unwrap();
            let b = corrupt(&clean, &spec.with_seed(2 * seed + 1)).unwrap();
            single += psnr(&clean, &a.noisy_image, &cfg).unwrap();
            combined += psnr(&clean, &combine_copies(&a, &b).unwrap(), &cfg).unwrap();
        }
        assert!(combined > single);
    }
}
