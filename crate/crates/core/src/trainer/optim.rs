use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{ConvParams, Real};

/// Adam hyperparameters. Weight decay is not configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every parameter tensor, in
/// `[w0, b0, w1, b1, ...]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[ConvParams<T>]) -> Self {
        let zeros: Vec<Vec<T>> = params
            .iter()
            .flat_map(|p| [vec![T::zero(); p.weight.len()], vec![T::zero(); p.bias.len()]])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

fn tensors_mut<T>(params: &mut [ConvParams<T>]) -> impl Iterator<Item = &mut Vec<T>> {
    params.iter_mut().flat_map(|p| [&mut p.weight, &mut p.bias])
}

fn tensors<T>(params: &[ConvParams<T>]) -> impl Iterator<Item = &Vec<T>> {
    params.iter().flat_map(|p| [&p.weight, &p.bias])
}

/// One bias-corrected Adam update without weight decay. Refuses to touch
/// anything if a gradient is non-finite.
pub fn adam_step<T: Real>(
    params: &mut [ConvParams<T>],
    grads: &[ConvParams<T>],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || 2 * params.len() != state.m.len() {
        return Err(Error::InvalidConfig("optimizer state does not match the parameters".into()));
    }
    for (k, g) in tensors(grads).enumerate() {
        if !g.iter().all(|v| v.is_finite()) {
            let kind = if k % 2 == 0 { "weight" } else { "bias" };
            return Err(Error::NonFiniteGradient(format!("conv {} {kind}", k / 2)));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    let (inv_c1, inv_c2) = (T::of(1.0 / c1), T::of(1.0 / c2));
    let (lr, eps) = (T::of(lr), T::of(cfg.eps));
    for (((p, g), m), v) in tensors_mut(params)
        .zip(tensors(grads))
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + one_b1 * gi;
            v[i] = b2 * v[i] + one_b2 * gi * gi;
            let m_hat = m[i] * inv_c1;
            let v_hat = v[i] * inv_c2;
            p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Cosine decay from `lr0` at epoch 0 to exactly 0 at the last epoch.
pub fn cosine_lr(epoch: usize, epochs: usize, lr0: f64) -> f64 {
    if epochs <= 1 {
        return lr0;
    }
    let last = epochs - 1;
    if epoch >= last {
        return 0.0;
    }
    0.5 * lr0 * (1.0 + (std::f64::consts::PI * epoch as f64 / last as f64).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Vec<ConvParams<f64>> {
        vec![ConvParams {
            in_channels: 1,
            out_channels: 1,
            weight: vec![v; 9],
            bias: vec![v],
        }]
    }

    #[test]
    fn first_step_is_signed_lr() {
        let mut p = scalar(1.0);
        let mut g = scalar(0.0);
        g[0].weight = vec![3.0, -2.0, 1e-3, -1e-3, 5.0, 0.5, -0.5, 1.0, -1.0];
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, 0.01, &AdamConfig::default()).unwrap();
        for (w, gi) in p[0].weight.iter().zip(&g[0].weight) {
            let update = w - 1.0;
            let expected = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((update - expected).abs() < 1e-9, "{update} vs {expected}");
        }
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut p = scalar(0.7);
        let g = scalar(0.0);
        let mut s = AdamState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut s, 0.1, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, scalar(0.7));
        assert!(s.m.iter().chain(&s.v).flatten().all(|&v| v == 0.0));
        assert_eq!(s.t, 5);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = scalar(1.0);
        let mut g = scalar(0.0);
        g[0].bias[0] = f64::NAN;
        let mut s = AdamState::new(&p);
        let r = adam_step(&mut p, &g, &mut s, 0.1, &AdamConfig::default());
        assert!(matches!(r, Err(Error::NonFiniteGradient(_))));
        assert_eq!(p, scalar(1.0));
        assert_eq!(s.t, 0);
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 1e-3), 1e-3);
        assert_eq!(cosine_lr(99, 100, 1e-3), 0.0);
        assert!((cosine_lr(50, 101, 1e-3) - 5e-4).abs() < 1e-15);
        assert_eq!(cosine_lr(0, 1, 1e-3), 1e-3);
        let lrs: Vec<f64> = (0..10).map(|e| cosine_lr(e, 10, 1.0)).collect();
        assert!(lrs.windows(2).all(|w| w[1] < w[0]));
    }
}
