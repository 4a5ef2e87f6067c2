//! Synthetic correlated stacks for desk-scale experiments.
//!
//! Each plane is a cross-section of a slowly drifting smooth random field:
//! independent smooth "key" fields are placed every `1 / drift_rate`
//! planes and consecutive keys are blended with a cosine/sine weight, so
//! every plane keeps unit field variance while the correlation between
//! planes decays with their distance.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stack::{ImageStack, Plane};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub planes: usize,
    pub height: usize,
    pub width: usize,
    /// Gaussian blur sigma of the random fields, in pixels.
    pub smoothness: f64,
    /// Key fields per plane; 0 gives identical planes.
    pub drift_rate: f64,
    /// Independent Gaussian noise added to each plane.
    pub noise_sigma: f64,
    /// Multiply by a fixed soft-edged elliptical support shared by all planes.
    pub structures: bool,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            planes: 16,
            height: 64,
            width: 64,
            smoothness: 2.5,
            drift_rate: 0.35,
            noise_sigma: 0.0,
            structures: true,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    fn validate(&self) -> Result<()> {
        if self.planes == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidConfig("phantom dimensions must be positive".into()));
        }
        if !(self.smoothness > 0.0) || self.drift_rate < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig(
                "phantom smoothness must be positive, drift and noise non-negative".into(),
            ));
        }
        Ok(())
    }
}

pub fn generate_phantom_stack(spec: &PhantomSpec) -> Result<ImageStack> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let last_phase = (spec.planes - 1) as f64 * spec.drift_rate;
    let keys: Vec<Plane> = (0..last_phase.floor() as usize + 2)
        .map(|_| smooth_field(h, w, spec.smoothness, &mut rng))
        .collect();
    let support = if spec.structures {
        elliptical_support(h, w)
    } else {
        Plane::ones((h, w))
    };

    let planes = (0..spec.planes)
        .map(|z| {
            let phase = z as f64 * spec.drift_rate;
            let k = phase.floor() as usize;
            let t = phase - k as f64;
            let angle = 0.5 * std::f64::consts::PI * t;
            let field = &keys[k] * angle.cos() + &keys[k + 1] * angle.sin();
            let mut plane = Array2::from_shape_fn((h, w), |ij| support[ij] * (0.5 + 0.2 * field[ij]));
            if spec.noise_sigma > 0.0 {
                plane.mapv_inplace(|v| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    v + spec.noise_sigma * n
                });
            }
            plane
        })
        .collect();
    ImageStack::new(format!("phantom-{}", spec.seed), planes)
}

/// Periodic Gaussian-blurred white noise, standardized to zero mean and
/// unit variance.
fn smooth_field(h: usize, w: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Plane {
    let noise: Plane = Array2::from_shape_fn((h, w), |_| StandardNormal.sample(rng));
    let radius = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let rows = Array2::from_shape_fn((h, w), |(y, x)| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, g)| g * noise[[y, wrap(x as isize + k as isize - radius, w)]])
            .sum::<f64>()
    });
    let blurred = Array2::from_shape_fn((h, w), |(y, x)| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, g)| g * rows[[wrap(y as isize + k as isize - radius, h), x]])
            .sum::<f64>()
    });
    let n = blurred.len() as f64;
    let mean = blurred.sum() / n;
    let std = (blurred.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    blurred.mapv(|v| (v - mean) / std.max(f64::MIN_POSITIVE))
}

fn elliptical_support(h: usize, w: usize) -> Plane {
    Array2::from_shape_fn((h, w), |(y, x)| {
        let dy = (y as f64 + 0.5) / h as f64 - 0.5;
        let dx = (x as f64 + 0.5) / w as f64 - 0.5;
        let r = ((dy / 0.42).powi(2) + (dx / 0.36).powi(2)).sqrt();
        // soft edge, roughly two pixels wide at 64x64
        1.0 / (1.0 + ((r - 1.0) * 30.0).exp())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ssim, MetricConfig};

    #[test]
    fn zero_drift_gives_identical_planes() {
        let spec = PhantomSpec {
            drift_rate: 0.0,
            ..PhantomSpec::default()
        };
        let s = generate_phantom_stack(&spec).unwrap();
        let cfg = MetricConfig::default();
        for i in 1..s.len() {
            assert_eq!(s.plane(i), s.plane(0));
            assert_eq!(ssim(s.plane(i - 1), s.plane(i), &cfg).unwrap(), 1.0);
        }
    }

    #[test]
    fn neighbors_more_similar_than_distant_planes() {
        let cfg = MetricConfig {
            data_range: 1.0,
            ..MetricConfig::default()
        };
        let (mut adj, mut far) = (0.0, 0.0);
        for seed in 0..2 {
            let s = generate_phantom_stack(&PhantomSpec { seed, ..PhantomSpec::default() }).unwrap();
            for i in 0..8 {
                adj += ssim(s.plane(i), s.plane(i + 1), &cfg).unwrap() / 16.0;
                far += ssim(s.plane(i), s.plane(i + 8), &cfg).unwrap() / 16.0;
            }
        }
        assert!((0.8..0.95).contains(&adj), "adjacent ssim {adj}");
        assert!(far < adj - 0.2, "distant ssim {far}");
    }

    #[test]
    fn seed_deterministic() {
        let spec = PhantomSpec::default();
        assert_eq!(generate_phantom_stack(&spec).unwrap(), generate_phantom_stack(&spec).unwrap());
        let other = PhantomSpec { seed: 1, ..spec };
        assert_ne!(generate_phantom_stack(&spec).unwrap(), generate_phantom_stack(&other).unwrap());
    }

    #[test]
    fn rejects_invalid_spec() {
        let spec = PhantomSpec {
            smoothness: 0.0,
            ..PhantomSpec::default()
        };
        assert!(generate_phantom_stack(&spec).is_err());
    }
}
