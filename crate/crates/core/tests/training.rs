use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stackdenoise::dataio::{generate_phantom_stack, PhantomSpec};
use stackdenoise::nnet::{build_microscopy_unet, ConvParams, Tensor4};
use stackdenoise::trainer::{adam_step, evaluate_mse, mse_loss, train, AdamConfig, AdamState, TrainConfig};
use stackdenoise::{ImageStack, SamplerConfig};

#[test]
fn mse_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = Tensor4::<f64>::from_fn([2, 1, 7, 9], |_| StandardNormal.sample(&mut rng));
    let t = Tensor4::<f64>::from_fn([2, 1, 7, 9], |_| StandardNormal.sample(&mut rng));
    let mut acc = 0.0;
    for b in 0..2 {
        for y in 0..7 {
            for x in 0..9 {
                acc += (p.get([b, 0, y, x]) - t.get([b, 0, y, x])).powi(2);
            }
        }
    }
    let (loss, grad) = mse_loss(&p, &t).unwrap();
    assert!((loss - acc / 126.0).abs() < 1e-10);
    assert!((grad.get([1, 0, 3, 4]) - 2.0 * (p.get([1, 0, 3, 4]) - t.get([1, 0, 3, 4])) / 126.0).abs() < 1e-15);
}

fn one_param(w: f64) -> Vec<ConvParams<f64>> {
    vec![ConvParams {
        in_channels: 1,
        out_channels: 1,
        weight: vec![w; 9],
        bias: vec![0.0],
    }]
}

// Parameter values after each step from a separate scalar implementation
// of the Adam recurrences (start 0, lr 0.1, default betas and eps).
#[test]
fn adam_three_step_trace() {
    let expected = [-0.09999999900000002, -0.12663370262909684, -0.16067661693515348];
    let mut p = one_param(0.0);
    let mut state = AdamState::new(&p);
    for (g, want) in [1.0, -0.5, 0.25].into_iter().zip(expected) {
        let mut grads = one_param(0.0);
        grads[0].weight[0] = g;
        adam_step(&mut p, &grads, &mut state, 0.1, &AdamConfig::default()).unwrap();
        assert!((p[0].weight[0] - want).abs() < 1e-12, "{} vs {want}", p[0].weight[0]);
        assert_eq!(p[0].weight[1], 0.0);
    }
}

#[test]
fn no_weight_decay_shrinkage() {
    let mut p = one_param(3.0);
    let mut state = AdamState::new(&p);
    for _ in 0..10 {
        adam_step(&mut p, &one_param(0.0), &mut state, 0.5, &AdamConfig::default()).unwrap();
    }
    assert_eq!(p, one_param(3.0));
}

fn constant_phantoms(n: usize, seed: u64) -> Vec<ImageStack> {
    (0..n)
        .map(|i| {
            generate_phantom_stack(&PhantomSpec {
                planes: 6,
                height: 16,
                width: 16,
                drift_rate: 0.0,
                seed: seed + i as u64,
                ..PhantomSpec::default()
            })
            .unwrap()
        })
        .collect()
}

fn self_pairs(stacks: &[ImageStack]) -> Vec<(ImageStack, ImageStack)> {
    stacks.iter().map(|s| (s.clone(), s.clone())).collect()
}

/// Identical, noiseless planes: the neighbors predict the target exactly.
#[test]
fn learns_identity_on_constant_stacks() {
    // 72 training examples per epoch; 20 epochs of cosine decay from 3e-3
    let train_pairs = self_pairs(&constant_phantoms(12, 0));
    let val_pairs = self_pairs(&constant_phantoms(1, 100));
    let mut net = build_microscopy_unet::<f32>(2, 0.25).unwrap();
    net.init_he(0);
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 4,
        lr0: 3e-3,
        seed: 1,
        sampler: SamplerConfig::self_supervised(1).unwrap(),
        ..TrainConfig::default()
    };
    let out = train(&train_pairs, &val_pairs, &mut net, &cfg).unwrap();
    let best = out.history[out.best_epoch].val_mse.unwrap();
    assert!(best < 1e-4, "{best}");

    // early training loss falls: moving average of width 3 is monotone
    let losses: Vec<f64> = out.history.iter().take(5).map(|r| r.train_mse).collect();
    let avg: Vec<f64> = losses.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
    assert!(avg.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn validation_leaves_parameters_untouched() {
    let pairs = self_pairs(&constant_phantoms(1, 5));
    let net = build_microscopy_unet::<f32>(2, 0.25).unwrap();
    let before = net.params().to_vec();
    let sampler = SamplerConfig::self_supervised(1).unwrap();
    let a = evaluate_mse(&net, &pairs, &sampler, 4).unwrap();
    let b = evaluate_mse(&net, &pairs, &sampler, 3).unwrap();
    assert_eq!(net.params(), &before[..]);
    assert!((a - b).abs() < 1e-6 * a.max(1e-12));
}
