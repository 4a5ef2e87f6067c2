//! Training loop: MSE loss, Adam with per-epoch cosine decay, optional
//! augmentation and best-validation model selection.

mod augment;
mod optim;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use augment::{
    augment_microscopy, augment_mri, draw_translation, rotate90, translate_plane, MicroscopyDraw,
};
pub use optim::{adam_step, cosine_lr, AdamConfig, AdamState};

pub use crate::nnet::ops::mse_loss;
use crate::error::{shape_mismatch, Error, Result};
use crate::nnet::{ConvParams, NetworkGraph, Real, Tensor4};
use crate::stack::{enumerate_epoch_counts, sample_example, ImageStack, Plane, SampledExample, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentKind {
    /// Signed shifts of up to `max_shift` pixels per axis.
    MriTranslate { max_shift: usize },
    /// Quarter-turn rotation, flips and a random `crop × crop` window.
    Microscopy { crop: usize },
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mri,
    Microscopy,
    Synthetic,
}

impl DatasetKind {
    /// Augmentation used for this kind of data unless configured otherwise.
    pub fn default_augment(self) -> AugmentKind {
        match self {
            DatasetKind::Mri => AugmentKind::MriTranslate { max_shift: 64 },
            DatasetKind::Microscopy => AugmentKind::Microscopy { crop: 256 },
            DatasetKind::Synthetic => AugmentKind::None,
        }
    }
}

fn default_epochs() -> usize {
    100
}
fn default_batch_size() -> usize {
    16
}
fn default_lr0() -> f64 {
    1e-3
}
fn default_sampler() -> SamplerConfig {
    SamplerConfig::copy_supervised(0)
}
fn default_augment() -> AugmentKind {
    AugmentKind::None
}
fn default_dataset_kind() -> DatasetKind {
    DatasetKind::Synthetic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr0")]
    pub lr0: f64,
    #[serde(default, flatten)]
    pub adam: AdamConfig,
    /// Always zero; kept in the schema so configs state it explicitly.
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_augment")]
    pub augment: AugmentKind,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerConfig,
    #[serde(default = "default_dataset_kind")]
    pub dataset_kind: DatasetKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            lr0: default_lr0(),
            adam: AdamConfig::default(),
            weight_decay: 0.0,
            seed: 0,
            augment: default_augment(),
            sampler: default_sampler(),
            dataset_kind: default_dataset_kind(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::InvalidConfig("epochs and batch_size must be at least 1".into()));
        }
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return Err(Error::InvalidConfig(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if self.weight_decay != 0.0 {
            return Err(Error::InvalidConfig("weight decay is fixed at 0".into()));
        }
        self.sampler.validate()
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        cosine_lr(epoch, self.epochs, self.lr0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    /// `None` without a validation set.
    pub val_mse: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub best_params: Vec<ConvParams<T>>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Stacks an example list into `(inputs, targets)` tensors.
pub fn batch_tensors<T: Real>(examples: &[(Vec<Plane>, Plane)]) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let (first_in, first_t) = examples
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty batch".into()))?;
    let (h, w) = first_t.dim();
    let c = first_in.len();
    let mut x = Vec::with_capacity(examples.len() * c * h * w);
    let mut y = Vec::with_capacity(examples.len() * h * w);
    for (ins, t) in examples {
        if ins.len() != c || t.dim() != (h, w) || ins.iter().any(|p| p.dim() != (h, w)) {
            return Err(shape_mismatch(&[c, h, w], &[ins.len(), t.dim().0, t.dim().1]));
        }
        for p in ins {
            x.extend(p.iter().map(|&v| T::of(v)));
        }
        y.extend(t.iter().map(|&v| T::of(v)));
    }
    let n = examples.len();
    Ok((Tensor4::from_vec([n, c, h, w], x)?, Tensor4::from_vec([n, 1, h, w], y)?))
}

fn augment_example(ex: SampledExample, kind: AugmentKind, rng: &mut ChaCha8Rng) -> Result<(Vec<Plane>, Plane)> {
    match kind {
        AugmentKind::None => Ok((ex.input_planes, ex.target_plane)),
        AugmentKind::MriTranslate { max_shift } => augment_mri(&ex.input_planes, &ex.target_plane, max_shift, rng),
        AugmentKind::Microscopy { crop } => augment_microscopy(&ex.input_planes, &ex.target_plane, crop, rng),
    }
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64 + 1)
}

/// Mean squared error of the network over every plane of the validation
/// pairs, without augmentation.
pub fn evaluate_mse<T: Real>(
    net: &NetworkGraph<T>,
    pairs: &[(ImageStack, ImageStack)],
    sampler: &SamplerConfig,
    batch_size: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (input, target) in pairs {
        let idx: Vec<usize> = (0..input.len()).collect();
        for chunk in idx.chunks(batch_size.max(1)) {
            let examples = chunk
                .iter()
                .map(|&i| sample_example(input, target, i, sampler).map(|e| (e.input_planes, e.target_plane)))
                .collect::<Result<Vec<_>>>()?;
            let (x, y) = batch_tensors::<T>(&examples)?;
            let pred = net.forward_inference(&x)?;
            let (loss, _) = mse_loss(&pred, &y)?;
            sum += loss * y.len() as f64;
            count += y.len();
        }
    }
    Ok(sum / count as f64)
}

/// Trains `net` in place. Each pair is `(input stack, target stack)`; pass
/// the same stack twice for self-supervised training. On return `net`
/// holds the parameters of the epoch with the lowest validation MSE (the
/// last epoch when `val_pairs` is empty).
pub fn train<T: Real>(
    train_pairs: &[(ImageStack, ImageStack)],
    val_pairs: &[(ImageStack, ImageStack)],
    net: &mut NetworkGraph<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    if net.n_in() != cfg.sampler.input_planes() {
        return Err(Error::InvalidConfig(format!(
            "network takes {} planes, sampler produces {}",
            net.n_in(),
            cfg.sampler.input_planes()
        )));
    }
    let counts: Vec<usize> = train_pairs.iter().map(|(a, _)| a.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(net.params());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<ConvParams<T>>)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr(epoch);
        let order = enumerate_epoch_counts(&counts, epoch_seed(cfg.seed, epoch));
        let (mut sum, mut count) = (0.0, 0usize);
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let examples = chunk
                .iter()
                .map(|&(s, i)| {
                    let (input, target) = &train_pairs[s];
                    augment_example(sample_example(input, target, i, &cfg.sampler)?, cfg.augment, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let (x, y) = batch_tensors::<T>(&examples)?;
            let pred = net.forward(&x)?;
            let (loss, grad) = mse_loss(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            net.backward(&grad)?;
            let grads = net.grads().to_vec();
            adam_step(net.params_mut(), &grads, &mut adam, lr, &cfg.adam)?;
            sum += loss * y.len() as f64;
            count += y.len();
        }
        let val_mse = if val_pairs.is_empty() {
            None
        } else {
            Some(evaluate_mse(net, val_pairs, &cfg.sampler, cfg.batch_size)?)
        };
        history.push(EpochRecord {
            epoch,
            train_mse: sum / count as f64,
            val_mse,
            lr,
        });
        let score = val_mse.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b || val_mse.is_none()) {
            best = Some((score, epoch, net.params().to_vec()));
        }
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    net.copy_params_from(&best_params)?;
    Ok(TrainOutcome {
        best_params,
        best_epoch,
        history,
    })
}

/// Denoises every plane of `stack` from its own neighborhood.
pub fn predict_stack<T: Real>(
    net: &NetworkGraph<T>,
    stack: &ImageStack,
    sampler: &SamplerConfig,
    batch_size: usize,
) -> Result<ImageStack> {
    if net.n_in() != sampler.input_planes() {
        return Err(Error::InvalidConfig(format!(
            "network takes {} planes, sampler produces {}",
            net.n_in(),
            sampler.input_planes()
        )));
    }
    let (h, w) = stack.dim();
    let mut planes = Vec::with_capacity(stack.len());
    let idx: Vec<usize> = (0..stack.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let examples = chunk
            .iter()
            .map(|&i| sample_example(stack, stack, i, sampler).map(|e| (e.input_planes, e.target_plane)))
            .collect::<Result<Vec<_>>>()?;
        let (x, _) = batch_tensors::<T>(&examples)?;
        let pred = net.forward_inference(&x)?;
        for b in 0..chunk.len() {
            let v: Vec<f64> = pred.sample(b).iter().map(|p| p.as_f64()).collect();
            planes.push(Plane::from_shape_vec((h, w), v).expect("network preserves the plane size"));
        }
    }
    ImageStack::new(stack.id(), planes)
}
