//! Analytic gradients against central finite differences in float64.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stackdenoise::nnet::{build_microscopy_unet, build_mri_unet, ops, NetworkGraph, Tensor4};

const EPS: f64 = 1e-4;
/// Smaller step for whole networks: fewer ReLU / max-pool kinks are
/// crossed, and float64 round-off is still far below the tolerance.
const NET_EPS: f64 = 1e-6;

fn random(shape: [usize; 4], seed: u64) -> Tensor4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor4::from_fn(shape, |_| StandardNormal.sample(&mut rng))
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(1e-300)
}

/// `sum(r * f(x))` for a fixed random projection `r` makes every output
/// element contribute to the scalar being differentiated.
fn numeric_grad(x: &Tensor4<f64>, r: &Tensor4<f64>, f: impl Fn(&Tensor4<f64>) -> Tensor4<f64>) -> Vec<f64> {
    let dot = |y: Tensor4<f64>| y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>();
    (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            p.data_mut()[i] += EPS;
            let mut m = x.clone();
            m.data_mut()[i] -= EPS;
            (dot(f(&p)) - dot(f(&m))) / (2.0 * EPS)
        })
        .collect()
}

#[test]
fn conv3x3_input_weight_bias() {
    let x = random([2, 3, 8, 8], 1);
    let w: Vec<f64> = random([4, 3, 3, 3], 2).into_vec();
    let b: Vec<f64> = random([1, 1, 1, 4], 3).into_vec();
    let r = random([2, 4, 8, 8], 4);
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; 4];
    let dx = ops::conv3x3_backward(&x, &w, &r, &mut dw, &mut db, true).unwrap().unwrap();

    let nx = numeric_grad(&x, &r, |x| ops::conv3x3_forward(x, &w, &b).unwrap());
    assert!(rel_err(dx.data(), &nx) < 1e-4);

    let wt = Tensor4::from_vec([1, 1, 1, w.len()], w.clone()).unwrap();
    let nw = numeric_grad(&wt, &r, |wt| ops::conv3x3_forward(&x, wt.data(), &b).unwrap());
    assert!(rel_err(&dw, &nw) < 1e-4);

    let bt = Tensor4::from_vec([1, 1, 1, 4], b.clone()).unwrap();
    let nb = numeric_grad(&bt, &r, |bt| ops::conv3x3_forward(&x, &w, bt.data()).unwrap());
    assert!(rel_err(&db, &nb) < 1e-4);
}

#[test]
fn maxpool() {
    let x = random([2, 3, 8, 8], 5);
    let r = random([2, 3, 4, 4], 6);
    let dx = ops::maxpool2x2_backward(&x, &r).unwrap();
    let nx = numeric_grad(&x, &r, |x| ops::maxpool2x2_forward(x).unwrap());
    assert!(rel_err(dx.data(), &nx) < 1e-4);
}

#[test]
fn upsample() {
    let x = random([2, 3, 8, 8], 7);
    let r = random([2, 3, 16, 16], 8);
    let dx = ops::upsample2x2_backward(&r).unwrap();
    let nx = numeric_grad(&x, &r, ops::upsample2x2_forward);
    assert!(rel_err(dx.data(), &nx) < 1e-4);
}

#[test]
fn concat_both_inputs() {
    let a = random([2, 3, 8, 8], 9);
    let b = random([2, 2, 8, 8], 10);
    let r = random([2, 5, 8, 8], 11);
    let (da, db) = ops::concat_backward(&r, 3).unwrap();
    let na = numeric_grad(&a, &r, |a| ops::concat_forward(a, &b).unwrap());
    let nb = numeric_grad(&b, &r, |b| ops::concat_forward(&a, b).unwrap());
    assert!(rel_err(da.data(), &na) < 1e-4);
    assert!(rel_err(db.data(), &nb) < 1e-4);
}

#[test]
fn add_both_inputs() {
    let a = random([2, 3, 8, 8], 12);
    let b = random([2, 3, 8, 8], 13);
    let r = random([2, 3, 8, 8], 14);
    let (da, db) = ops::add_backward(&r);
    let na = numeric_grad(&a, &r, |a| ops::add_forward(a, &b).unwrap());
    let nb = numeric_grad(&b, &r, |b| ops::add_forward(&a, b).unwrap());
    assert!(rel_err(da.data(), &na) < 1e-4);
    assert!(rel_err(db.data(), &nb) < 1e-4);
}

/// Inputs bounded away from the kink at zero.
fn away_from_zero(seed: u64) -> Tensor4<f64> {
    random([2, 3, 8, 8], seed).map(|v| if v.abs() < 0.05 { v + 0.1f64.copysign(v) } else { v })
}

#[test]
fn relu() {
    let x = away_from_zero(15);
    let r = random([2, 3, 8, 8], 16);
    let dx = ops::relu_backward(&ops::relu_forward(&x), &r);
    let nx = numeric_grad(&x, &r, ops::relu_forward);
    assert!(rel_err(dx.data(), &nx) < 1e-4);
    let pos = x.map(f64::abs);
    assert_eq!(ops::relu_backward(&ops::relu_forward(&pos), &r), r);
}

#[test]
fn leaky_relu() {
    let x = away_from_zero(17);
    let r = random([2, 3, 8, 8], 18);
    let dx = ops::leaky_relu_backward(&ops::leaky_relu_forward(&x), &r);
    let nx = numeric_grad(&x, &r, ops::leaky_relu_forward);
    assert!(rel_err(dx.data(), &nx) < 1e-4);
    let neg = x.map(|v| -v.abs());
    let g = ops::leaky_relu_backward(&ops::leaky_relu_forward(&neg), &r);
    assert_eq!(g, r.map(|v| 0.1 * v));
}

#[test]
fn mse() {
    let p = random([2, 3, 8, 8], 19);
    let t = random([2, 3, 8, 8], 20);
    let (_, g) = ops::mse_loss(&p, &t).unwrap();
    let one = Tensor4::from_vec([1, 1, 1, 1], vec![1.0]).unwrap();
    let np = numeric_grad(&p, &one, |p| {
        Tensor4::from_vec([1, 1, 1, 1], vec![ops::mse_loss(p, &t).unwrap().0]).unwrap()
    });
    assert!(rel_err(g.data(), &np) < 1e-4);
}

/// Compares parameter gradients of a whole network on `sum(r * net(x))`
/// against finite differences along one random direction per parameter
/// tensor, plus a random sample of single coordinates.
fn check_network(mut net: NetworkGraph<f64>, h: usize, seed: u64) -> f64 {
    let n = net.n_in();
    net.init_he(seed);
    // non-zero biases exercise the bias path through every layer
    for (k, p) in net.params_mut().iter_mut().enumerate() {
        p.bias.iter_mut().enumerate().for_each(|(i, b)| *b = 0.01 * ((i + k) % 5) as f64 - 0.02);
    }
    let x = random([2, n, h, h], seed + 1);
    let r = random([2, 1, h, h], seed + 2);
    net.forward(&x).unwrap();
    net.backward(&r).unwrap();
    let grads: Vec<Vec<f64>> = net.grads().iter().flat_map(|g| [g.weight.clone(), g.bias.clone()]).collect();
    let base: Vec<Vec<f64>> = net.params().iter().flat_map(|p| [p.weight.clone(), p.bias.clone()]).collect();

    let loss_at = |net: &mut NetworkGraph<f64>, tensor: usize, dir: &[f64], step: f64| -> f64 {
        let set = |net: &mut NetworkGraph<f64>, step: f64| {
            let p = &mut net.params_mut()[tensor / 2];
            let v = if tensor % 2 == 0 { &mut p.weight } else { &mut p.bias };
            v.iter_mut().zip(&base[tensor]).zip(dir).for_each(|((v, b), d)| *v = b + step * d);
        };
        set(net, step);
        let y = net.forward_inference(&x).unwrap();
        set(net, 0.0);
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    let mut probe = |net: &mut NetworkGraph<f64>, tensor: usize, dir: Vec<f64>| {
        analytic.push(grads[tensor].iter().zip(&dir).map(|(g, d)| g * d).sum::<f64>());
        let lp = loss_at(net, tensor, &dir, NET_EPS);
        let lm = loss_at(net, tensor, &dir, -NET_EPS);
        numeric.push((lp - lm) / (2.0 * NET_EPS));
    };
    for tensor in 0..grads.len() {
        let dir: Vec<f64> = (0..grads[tensor].len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        let dir = dir.into_iter().map(|d| d / norm).collect();
        probe(&mut net, tensor, dir);
    }
    for _ in 0..64 {
        let tensor = rng.random_range(0..grads.len());
        let mut dir = vec![0.0; grads[tensor].len()];
        let i = rng.random_range(0..dir.len());
        dir[i] = 1.0;
        probe(&mut net, tensor, dir);
    }
    rel_err(&analytic, &numeric)
}

#[test]
fn microscopy_network_end_to_end() {
    for n in [2, 3] {
        let err = check_network(build_microscopy_unet(n, 0.25).unwrap(), 16, 30 + n as u64);
        assert!(err < 1e-3, "n = {n}: {err}");
    }
}

// Five poolings need spatial dims divisible by 32, so 32×32 is the
// smallest input this network accepts.
#[test]
fn mri_network_end_to_end() {
    let err = check_network(build_mri_unet(3, 0.25).unwrap(), 32, 40);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn mri_network_rejects_16x16() {
    let net = build_mri_unet::<f64>(3, 0.25).unwrap();
    assert!(net.forward_inference(&Tensor4::zeros([1, 3, 16, 16])).is_err());
}

#[test]
fn linearized_network_is_affine() {
    for mut net in [build_mri_unet::<f64>(2, 0.25).unwrap(), build_microscopy_unet::<f64>(2, 0.25).unwrap()] {
        net.init_he(3);
        net.set_linearized(true);
        let a = random([1, 2, 32, 32], 50);
        let b = random([1, 2, 32, 32], 51);
        let zero = Tensor4::zeros([1, 2, 32, 32]);
        let f0 = net.forward_inference(&zero).unwrap();
        let f = |x: &Tensor4<f64>| {
            let y = net.forward_inference(x).unwrap();
            y.data().iter().zip(f0.data()).map(|(p, q)| p - q).collect::<Vec<_>>()
        };
        let combo = Tensor4::from_vec(
            a.shape(),
            a.data().iter().zip(b.data()).map(|(x, y)| 2.0 * x - 0.5 * y).collect(),
        )
        .unwrap();
        let (fa, fb, fc) = (f(&a), f(&b), f(&combo));
        for i in 0..fc.len() {
            assert!((fc[i] - (2.0 * fa[i] - 0.5 * fb[i])).abs() < 1e-8);
        }
    }
}
