use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ops;
use super::tensor::{Real, Tensor4};
use crate::error::{shape_mismatch, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Mri,
    Microscopy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Linear,
}

/// Which input channels the residual layer adds to the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSource {
    Channel(usize),
    /// Mean of two channels.
    Mean(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Input,
    Conv3x3 { activation: Activation, param: usize },
    MaxPool2x2,
    Upsample2x2,
    /// `[previous layer, layer source]` along channels.
    Concat { source: usize },
    /// Previous layer plus a selection of input channels.
    ResidualAdd { source: ResidualSource },
}

/// One row of the architecture table. Every layer reads the layer before
/// it; concat and add additionally read `source` (an earlier id).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: usize,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `out × in × 3 × 3`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvParams<T> {
    fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: vec![T::zero(); out_channels * in_channels * 9],
            bias: vec![T::zero(); out_channels],
        }
    }
}

/// Output shape of one layer: channels, height, width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub id: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone)]
pub struct NetworkGraph<T: Real> {
    variant: Variant,
    n_in: usize,
    width_scale: f64,
    layers: Vec<LayerSpec>,
    params: Vec<ConvParams<T>>,
    grads: Vec<ConvParams<T>>,
    cache: Option<Vec<Tensor4<T>>>,
    linearized: bool,
}

fn scaled(c: usize, s: f64) -> usize {
    ((c as f64 * s).round() as usize).max(1)
}

fn check_build_args(n_in: usize, width_scale: f64) -> Result<()> {
    if n_in < 1 {
        return Err(Error::InvalidConfig("network needs at least one input plane".into()));
    }
    if !(width_scale > 0.0 && width_scale <= 1.0) {
        return Err(Error::InvalidConfig(format!("width_scale {width_scale} is outside (0, 1]")));
    }
    Ok(())
}

struct Builder {
    layers: Vec<LayerSpec>,
    convs: usize,
    activation: Activation,
}

impl Builder {
    fn new(n_in: usize, activation: Activation) -> Self {
        Self {
            layers: vec![LayerSpec {
                id: 1,
                kind: LayerKind::Input,
                in_channels: n_in,
                out_channels: n_in,
            }],
            convs: 0,
            activation,
        }
    }

    fn last(&self) -> usize {
        self.layers.last().unwrap().out_channels
    }

    fn push(&mut self, kind: LayerKind, out: usize) -> usize {
        let id = self.layers.len() + 1;
        let in_channels = self.last();
        self.layers.push(LayerSpec {
            id,
            kind,
            in_channels,
            out_channels: out,
        });
        id
    }

    fn conv(&mut self, out: usize) -> usize {
        self.conv_with(out, self.activation)
    }

    fn conv_with(&mut self, out: usize, activation: Activation) -> usize {
        let param = self.convs;
        self.convs += 1;
        self.push(LayerKind::Conv3x3 { activation, param }, out)
    }

    fn pool(&mut self) -> usize {
        let c = self.last();
        self.push(LayerKind::MaxPool2x2, c)
    }

    fn up(&mut self) -> usize {
        let c = self.last();
        self.push(LayerKind::Upsample2x2, c)
    }

    fn concat(&mut self, source: usize) -> usize {
        let c = self.last() + self.layers[source - 1].out_channels;
        self.push(LayerKind::Concat { source }, c)
    }
}

/// Five-level U-Net with LeakyReLU(0.1); the Noise2Noise design.
pub fn build_mri_unet<T: Real>(n_in: usize, width_scale: f64) -> Result<NetworkGraph<T>> {
    check_build_args(n_in, width_scale)?;
    let (c48, c96, c64, c32) = (
        scaled(48, width_scale),
        scaled(96, width_scale),
        scaled(64, width_scale),
        scaled(32, width_scale),
    );
    let mut b = Builder::new(n_in, Activation::LeakyRelu);
    b.conv(c48);
    b.conv(c48);
    let mut skips = vec![b.pool()];
    for _ in 0..4 {
        b.conv(c48);
        skips.push(b.pool());
    }
    skips.pop();
    b.conv(c48);
    for _ in 0..4 {
        b.up();
        b.concat(skips.pop().unwrap());
        b.conv(c96);
        b.conv(c96);
    }
    b.up();
    b.concat(1);
    b.conv(c64);
    b.conv(c32);
    b.conv_with(1, Activation::Linear);
    NetworkGraph::from_layers(Variant::Mri, n_in, width_scale, b.layers)
}

/// Two-level residual U-Net with ReLU. The final layer adds the middle
/// input plane, or the mean of the two central planes for even `n_in`.
pub fn build_microscopy_unet<T: Real>(n_in: usize, width_scale: f64) -> Result<NetworkGraph<T>> {
    check_build_args(n_in, width_scale)?;
    let s = |c| scaled(c, width_scale);
    let mut b = Builder::new(n_in, Activation::Relu);
    b.conv(s(32));
    let skip1 = b.conv(s(32));
    b.pool();
    b.conv(s(64));
    let skip2 = b.conv(s(64));
    b.pool();
    b.conv(s(128));
    b.conv(s(64));
    b.up();
    b.concat(skip2);
    b.conv(s(64));
    b.conv(s(32));
    b.up();
    b.concat(skip1);
    b.conv(s(32));
    b.conv(s(32));
    b.conv_with(1, Activation::Linear);
    let source = if n_in % 2 == 1 {
        ResidualSource::Channel(n_in / 2)
    } else {
        ResidualSource::Mean(n_in / 2 - 1, n_in / 2)
    };
    b.push(LayerKind::ResidualAdd { source }, 1);
    NetworkGraph::from_layers(Variant::Microscopy, n_in, width_scale, b.layers)
}

impl<T: Real> NetworkGraph<T> {
    pub fn build(variant: Variant, n_in: usize, width_scale: f64) -> Result<Self> {
        match variant {
            Variant::Mri => build_mri_unet(n_in, width_scale),
            Variant::Microscopy => build_microscopy_unet(n_in, width_scale),
        }
    }

    fn from_layers(variant: Variant, n_in: usize, width_scale: f64, layers: Vec<LayerSpec>) -> Result<Self> {
        let mut params = Vec::new();
        for l in &layers {
            match l.kind {
                LayerKind::Conv3x3 { param, .. } => {
                    debug_assert_eq!(param, params.len());
                    params.push(ConvParams::zeros(l.in_channels, l.out_channels));
                }
                LayerKind::Concat { source } if source >= l.id => {
                    return Err(Error::InvalidConfig(format!("layer {} concatenates a later layer", l.id)));
                }
                _ => {}
            }
        }
        let grads = params.clone();
        let mut net = Self {
            variant,
            n_in,
            width_scale,
            layers,
            params,
            grads,
            cache: None,
            linearized: false,
        };
        net.init_he(0);
        Ok(net)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn width_scale(&self) -> f64 {
        self.width_scale
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[ConvParams<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ConvParams<T>] {
        &mut self.params
    }

    pub fn grads(&self) -> &[ConvParams<T>] {
        &self.grads
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.weight.len() + p.bias.len()).sum()
    }

    /// Number of 2×2 poolings; spatial dims must be divisible by `2^depth`.
    pub fn depth(&self) -> u32 {
        self.layers.iter().filter(|l| l.kind == LayerKind::MaxPool2x2).count() as u32
    }

    /// Normal weights with variance `2 / fan_in`, zero biases.
    pub fn init_he(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut self.params {
            let std = (2.0 / (p.in_channels * 9) as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("positive std");
            p.weight.iter_mut().for_each(|w| *w = T::of(dist.sample(&mut rng)));
            p.bias.fill(T::zero());
        }
        self.cache = None;
    }

    pub fn zero_params(&mut self) {
        for p in &mut self.params {
            p.weight.fill(T::zero());
            p.bias.fill(T::zero());
        }
        self.cache = None;
    }

    /// Test hook: treat every activation as linear and replace max pooling
    /// by mean pooling, which makes the network affine in its input.
    pub fn set_linearized(&mut self, on: bool) {
        self.linearized = on;
        self.cache = None;
    }

    /// SHA-256 over the canonical layer description; guards checkpoints
    /// against topology mismatches.
    pub fn graph_hash(&self) -> String {
        let desc = serde_json::json!({
            "variant": self.variant,
            "n_in": self.n_in,
            "layers": self.layers,
        });
        let digest = Sha256::digest(desc.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Output shape of every layer for an `h × w` input.
    pub fn shape_walk(&self, h: usize, w: usize) -> Result<Vec<LayerShape>> {
        let d = 1usize << self.depth();
        if h == 0 || w == 0 || h % d != 0 || w % d != 0 {
            return Err(Error::ShapeMismatch {
                expected: vec![h.div_ceil(d).max(1) * d, w.div_ceil(d).max(1) * d],
                found: vec![h, w],
            });
        }
        let mut out: Vec<LayerShape> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (mut hh, mut ww) = out.last().map_or((h, w), |s| (s.height, s.width));
            match l.kind {
                LayerKind::MaxPool2x2 => (hh, ww) = (hh / 2, ww / 2),
                LayerKind::Upsample2x2 => (hh, ww) = (hh * 2, ww * 2),
                LayerKind::Concat { source } => {
                    let s = out[source - 1];
                    if (s.height, s.width) != (hh, ww) {
                        return Err(shape_mismatch(&[hh, ww], &[s.height, s.width]));
                    }
                }
                _ => {}
            }
            out.push(LayerShape {
                id: l.id,
                channels: l.out_channels,
                height: hh,
                width: ww,
            });
        }
        Ok(out)
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let [n, c, h, w] = x.shape();
        if c != self.n_in || n == 0 {
            return Err(shape_mismatch(&[n.max(1), self.n_in, h, w], &x.shape()));
        }
        self.shape_walk(h, w)?;
        x.check_finite("network input")
    }

    fn run(&self, x: &Tensor4<T>) -> Result<Vec<Tensor4<T>>> {
        self.check_input(x)?;
        let mut outs: Vec<Tensor4<T>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let y = match l.kind {
                LayerKind::Input => x.clone(),
                LayerKind::Conv3x3 { activation, param } => {
                    let p = &self.params[param];
                    let z = ops::conv3x3_forward(outs.last().unwrap(), &p.weight, &p.bias)?;
                    match self.effective(activation) {
                        Activation::Relu => ops::relu_forward(&z),
                        Activation::LeakyRelu => ops::leaky_relu_forward(&z),
                        Activation::Linear => z,
                    }
                }
                LayerKind::MaxPool2x2 if self.linearized => ops::avgpool2x2_forward(outs.last().unwrap())?,
                LayerKind::MaxPool2x2 => ops::maxpool2x2_forward(outs.last().unwrap())?,
                LayerKind::Upsample2x2 => ops::upsample2x2_forward(outs.last().unwrap()),
                LayerKind::Concat { source } => ops::concat_forward(outs.last().unwrap(), &outs[source - 1])?,
                LayerKind::ResidualAdd { source } => ops::add_forward(outs.last().unwrap(), &residual(x, source))?,
            };
            outs.push(y);
        }
        Ok(outs)
    }

    fn effective(&self, a: Activation) -> Activation {
        if self.linearized {
            Activation::Linear
        } else {
            a
        }
    }

    /// Training forward pass; caches activations for [`Self::backward`].
    pub fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.cache = None;
        let outs = self.run(x)?;
        let y = outs.last().unwrap().clone();
        self.cache = Some(outs);
        Ok(y)
    }

    /// Forward pass without caching; safe to share across threads.
    pub fn forward_inference(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        Ok(self.run(x)?.pop().unwrap())
    }

    /// Reverse pass from `dloss/doutput`; overwrites the parameter
    /// gradients. Consumes the activation cache.
    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<()> {
        let outs = self.cache.take().ok_or(Error::BackwardBeforeForward)?;
        let last = outs.last().unwrap();
        if dy.shape() != last.shape() {
            return Err(shape_mismatch(&last.shape(), &dy.shape()));
        }
        for g in &mut self.grads {
            g.weight.fill(T::zero());
            g.bias.fill(T::zero());
        }
        let mut grads: Vec<Option<Tensor4<T>>> = vec![None; outs.len()];
        *grads.last_mut().unwrap() = Some(dy.clone());
        fn acc<T: Real>(slot: &mut Option<Tensor4<T>>, g: Tensor4<T>) {
            match slot {
                Some(s) => s.add_assign(&g),
                None => *slot = Some(g),
            }
        }
        for i in (1..self.layers.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let prev_is_input = i == 1;
            match self.layers[i].kind {
                LayerKind::Input => {}
                LayerKind::Conv3x3 { activation, param } => {
                    let g = match self.effective(activation) {
                        Activation::Relu => ops::relu_backward(&outs[i], &g),
                        Activation::LeakyRelu => ops::leaky_relu_backward(&outs[i], &g),
                        Activation::Linear => g,
                    };
                    let p = &self.params[param];
                    let gp = &mut self.grads[param];
                    let dx = ops::conv3x3_backward(&outs[i - 1], &p.weight, &g, &mut gp.weight, &mut gp.bias, !prev_is_input)?;
                    if let Some(dx) = dx {
                        acc(&mut grads[i - 1], dx);
                    }
                }
                LayerKind::MaxPool2x2 if self.linearized => acc(&mut grads[i - 1], ops::avgpool2x2_backward(&outs[i - 1], &g)?),
                LayerKind::MaxPool2x2 => acc(&mut grads[i - 1], ops::maxpool2x2_backward(&outs[i - 1], &g)?),
                LayerKind::Upsample2x2 => acc(&mut grads[i - 1], ops::upsample2x2_backward(&g)?),
                LayerKind::Concat { source } => {
                    let (ga, gb) = ops::concat_backward(&g, outs[i - 1].channels())?;
                    acc(&mut grads[i - 1], ga);
                    if source > 1 {
                        acc(&mut grads[source - 1], gb);
                    }
                }
                // the residual term comes straight from the input
                LayerKind::ResidualAdd { .. } => acc(&mut grads[i - 1], g),
            }
        }
        Ok(())
    }

    /// Copies parameters from another graph of identical topology.
    pub fn copy_params_from(&mut self, params: &[ConvParams<T>]) -> Result<()> {
        if params.len() != self.params.len()
            || params
                .iter()
                .zip(&self.params)
                .any(|(a, b)| (a.in_channels, a.out_channels) != (b.in_channels, b.out_channels))
        {
            return Err(Error::GraphMismatch("parameter shapes differ".into()));
        }
        self.params = params.to_vec();
        self.cache = None;
        Ok(())
    }
}

fn residual<T: Real>(x: &Tensor4<T>, source: ResidualSource) -> Tensor4<T> {
    let [n, _, h, w] = x.shape();
    Tensor4::from_fn([n, 1, h, w], |[b, _, y, xx]| match source {
        ResidualSource::Channel(c) => x.get([b, c, y, xx]),
        ResidualSource::Mean(a, c) => (x.get([b, a, y, xx]) + x.get([b, c, y, xx])) * T::of(0.5),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn microscopy_residual_source() {
        let net = build_microscopy_unet::<f64>(3, 1.0).unwrap();
        assert_eq!(
            net.layers().last().unwrap().kind,
            LayerKind::ResidualAdd { source: ResidualSource::Channel(1) }
        );
        let net = build_microscopy_unet::<f64>(2, 1.0).unwrap();
        assert_eq!(
            net.layers().last().unwrap().kind,
            LayerKind::ResidualAdd { source: ResidualSource::Mean(0, 1) }
        );
    }

    #[test]
    fn zero_network_returns_residual() {
        let mut net = build_microscopy_unet::<f64>(2, 0.25).unwrap();
        net.zero_params();
        let x = Tensor4::<f64>::from_fn([1, 2, 8, 8], |[_, c, y, x]| (c * 64 + y * 8 + x) as f64);
        let y = net.forward_inference(&x).unwrap();
        for yy in 0..8 {
            for xx in 0..8 {
                assert_eq!(y.get([0, 0, yy, xx]), 0.5 * (x.get([0, 0, yy, xx]) + x.get([0, 1, yy, xx])));
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_mri_unet::<f32>(0, 1.0).is_err());
        assert!(build_mri_unet::<f32>(1, 1.5).is_err());
        let net = build_mri_unet::<f32>(3, 0.25).unwrap();
        assert!(net.forward_inference(&Tensor4::zeros([1, 3, 48, 48])).is_err());
        assert!(net.forward_inference(&Tensor4::zeros([1, 2, 32, 32])).is_err());
        let mut net = net;
        assert!(matches!(net.backward(&Tensor4::zeros([1, 1, 32, 32])), Err(Error::BackwardBeforeForward)));
    }

    #[test]
    fn graph_hash_depends_on_topology() {
        let a = build_mri_unet::<f32>(3, 0.25).unwrap();
        let b = build_mri_unet::<f32>(5, 0.25).unwrap();
        let c = build_mri_unet::<f32>(3, 0.25).unwrap();
        assert_ne!(a.graph_hash(), b.graph_hash());
        assert_eq!(a.graph_hash(), c.graph_hash());
    }

    #[test]
    fn deterministic_forward() {
        let net = build_mri_unet::<f32>(3, 0.25).unwrap();
        let x = Tensor4::<f32>::from_fn([2, 3, 32, 32], |[b, c, y, x]| ((b + c * 3 + y * 5 + x * 7) % 13) as f32 / 13.0);
        assert_eq!(net.forward_inference(&x).unwrap(), net.forward_inference(&x).unwrap());
    }
}
