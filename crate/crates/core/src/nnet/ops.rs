//! Forward and backward kernels of the fixed operator set.
//!
//! Backward functions take the cached forward input (or output, for the
//! activations) and the upstream gradient and return the downstream
//! gradient; parameter gradients are accumulated into caller buffers.

use super::tensor::{gemm, MatRef, Real, Tensor4};
use crate::error::{shape_mismatch, Error, Result};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.1;

fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            out[0] = T::zero();
                            out[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => out.copy_from_slice(src),
                        _ => {
                            out[..w - 1].copy_from_slice(&src[1..]);
                            out[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(col: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let g = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&g[1..]).for_each(|(d, v)| *d += *v),
                        1 => dst.iter_mut().zip(g).for_each(|(d, v)| *d += *v),
                        _ => dst[1..].iter_mut().zip(&g[..w - 1]).for_each(|(d, v)| *d += *v),
                    }
                }
            }
        }
    }
}

fn check_conv_params<T>(x: [usize; 4], weight: &[T], bias: &[T]) -> Result<usize> {
    let cout = bias.len();
    if weight.len() != cout * x[1] * 9 {
        return Err(shape_mismatch(&[cout, x[1], 3, 3], &[weight.len()]));
    }
    Ok(cout)
}

/// 3×3 convolution, stride 1, zero "same" padding. `weight` is laid out
/// `out × in × 3 × 3`; the output channel count is `bias.len()`.
pub fn conv3x3_forward<T: Real>(x: &Tensor4<T>, weight: &[T], bias: &[T]) -> Result<Tensor4<T>> {
    let [n, c, h, w] = x.shape();
    let cout = check_conv_params(x.shape(), weight, bias)?;
    let hw = h * w;
    let mut out = Tensor4::zeros([n, cout, h, w]);
    let mut col = vec![T::zero(); c * 9 * hw];
    for b in 0..n {
        im2col(x.sample(b), c, h, w, &mut col);
        let o = out.sample_mut(b);
        for (co, &bv) in bias.iter().enumerate() {
            o[co * hw..(co + 1) * hw].fill(bv);
        }
        gemm(MatRef::new(weight, cout, c * 9), MatRef::new(&col, c * 9, hw), T::one(), o);
    }
    Ok(out)
}

/// Accumulates weight and bias gradients; returns the input gradient
/// when `need_dx` is set.
pub fn conv3x3_backward<T: Real>(
    x: &Tensor4<T>,
    weight: &[T],
    dy: &Tensor4<T>,
    dweight: &mut [T],
    dbias: &mut [T],
    need_dx: bool,
) -> Result<Option<Tensor4<T>>> {
    let [n, c, h, w] = x.shape();
    let cout = dbias.len();
    if dy.shape() != [n, cout, h, w] {
        return Err(shape_mismatch(&[n, cout, h, w], &dy.shape()));
    }
    if weight.len() != cout * c * 9 || dweight.len() != weight.len() {
        return Err(shape_mismatch(&[cout, c, 3, 3], &[weight.len(), dweight.len()]));
    }
    let hw = h * w;
    let mut col = vec![T::zero(); c * 9 * hw];
    let mut dx = need_dx.then(|| Tensor4::zeros(x.shape()));
    for b in 0..n {
        let g = dy.sample(b);
        im2col(x.sample(b), c, h, w, &mut col);
        gemm(MatRef::new(g, cout, hw), MatRef::new(&col, c * 9, hw).t(), T::one(), dweight);
        for (co, db) in dbias.iter_mut().enumerate() {
            *db += g[co * hw..(co + 1) * hw].iter().copied().sum::<T>();
        }
        if let Some(dx) = dx.as_mut() {
            gemm(MatRef::new(weight, cout, c * 9).t(), MatRef::new(g, cout, hw), T::zero(), &mut col);
            col2im_add(&col, c, h, w, dx.sample_mut(b));
        }
    }
    Ok(dx)
}

fn check_even(x: [usize; 4]) -> Result<()> {
    if x[2] % 2 != 0 || x[3] % 2 != 0 {
        return Err(Error::ShapeMismatch {
            expected: vec![x[0], x[1], x[2] + x[2] % 2, x[3] + x[3] % 2],
            found: x.to_vec(),
        });
    }
    Ok(())
}

/// Index (0..4, row-major in the window) of the first maximum.
fn window_argmax<T: Real>(v: [T; 4]) -> usize {
    let mut best = 0;
    for k in 1..4 {
        if v[k] > v[best] {
            best = k;
        }
    }
    best
}

fn pool_windows<T: Real>(x: &Tensor4<T>, mut f: impl FnMut(usize, [usize; 4], [T; 4])) {
    let [n, c, h, w] = x.shape();
    let (ho, wo) = (h / 2, w / 2);
    let data = x.data();
    for p in 0..n * c {
        let base = p * h * w;
        for y in 0..ho {
            for xo in 0..wo {
                let i0 = base + 2 * y * w + 2 * xo;
                let idx = [i0, i0 + 1, i0 + w, i0 + w + 1];
                f((p * ho + y) * wo + xo, idx, idx.map(|i| data[i]));
            }
        }
    }
}

pub fn maxpool2x2_forward<T: Real>(x: &Tensor4<T>) -> Result<Tensor4<T>> {
    check_even(x.shape())?;
    let [n, c, h, w] = x.shape();
    let mut out = Tensor4::zeros([n, c, h / 2, w / 2]);
    let o = out.data_mut();
    pool_windows(x, |i, _, v| o[i] = v[window_argmax(v)]);
    Ok(out)
}

/// Routes each output gradient to the first maximal input of its window.
pub fn maxpool2x2_backward<T: Real>(x: &Tensor4<T>, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
    check_even(x.shape())?;
    let [n, c, h, w] = x.shape();
    if dy.shape() != [n, c, h / 2, w / 2] {
        return Err(shape_mismatch(&[n, c, h / 2, w / 2], &dy.shape()));
    }
    let mut dx = Tensor4::zeros(x.shape());
    let g = dy.data();
    let d = dx.data_mut();
    pool_windows(x, |i, idx, v| d[idx[window_argmax(v)]] += g[i]);
    Ok(dx)
}

/// 2×2 mean pooling; the linear stand-in for max pooling in linearized graphs.
pub fn avgpool2x2_forward<T: Real>(x: &Tensor4<T>) -> Result<Tensor4<T>> {
    check_even(x.shape())?;
    let [n, c, h, w] = x.shape();
    let mut out = Tensor4::zeros([n, c, h / 2, w / 2]);
    let o = out.data_mut();
    let q = T::of(0.25);
    pool_windows(x, |i, _, v| o[i] = (v[0] + v[1] + v[2] + v[3]) * q);
    Ok(out)
}

pub fn avgpool2x2_backward<T: Real>(x: &Tensor4<T>, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
    check_even(x.shape())?;
    let [n, c, h, w] = x.shape();
    if dy.shape() != [n, c, h / 2, w / 2] {
        return Err(shape_mismatch(&[n, c, h / 2, w / 2], &dy.shape()));
    }
    let mut dx = Tensor4::zeros(x.shape());
    let g = dy.data();
    let d = dx.data_mut();
    let q = T::of(0.25);
    pool_windows(x, |i, idx, _| idx.iter().for_each(|&j| d[j] += g[i] * q));
    Ok(dx)
}

/// Nearest-neighbor 2× upsampling.
pub fn upsample2x2_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    let [n, c, h, w] = x.shape();
    let mut out = Tensor4::zeros([n, c, 2 * h, 2 * w]);
    let src = x.data();
    let dst = out.data_mut();
    let wo = 2 * w;
    for p in 0..n * c {
        for y in 0..h {
            let s = &src[(p * h + y) * w..][..w];
            let row0 = (p * 2 * h + 2 * y) * wo;
            for (xi, &v) in s.iter().enumerate() {
                dst[row0 + 2 * xi] = v;
                dst[row0 + 2 * xi + 1] = v;
            }
            dst.copy_within(row0..row0 + wo, row0 + wo);
        }
    }
    out
}

pub fn upsample2x2_backward<T: Real>(dy: &Tensor4<T>) -> Result<Tensor4<T>> {
    check_even(dy.shape())?;
    let [n, c, h, w] = dy.shape();
    let mut dx = Tensor4::zeros([n, c, h / 2, w / 2]);
    let d = dx.data_mut();
    pool_windows(dy, |i, _, v| d[i] = v[0] + v[1] + v[2] + v[3]);
    Ok(dx)
}

/// Channel concatenation `[a, b]`.
pub fn concat_forward<T: Real>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, ca, h, w] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (n, h, w) != (nb, hb, wb) {
        return Err(shape_mismatch(&[n, cb, h, w], &b.shape()));
    }
    let mut out = Tensor4::zeros([n, ca + cb, h, w]);
    for s in 0..n {
        let o = out.sample_mut(s);
        let sa = a.sample(s);
        o[..sa.len()].copy_from_slice(sa);
        o[sa.len()..].copy_from_slice(b.sample(s));
    }
    Ok(out)
}

/// Splits the gradient of a concatenation back into its two parts.
pub fn concat_backward<T: Real>(dy: &Tensor4<T>, ca: usize) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let [n, c, h, w] = dy.shape();
    if ca > c {
        return Err(shape_mismatch(&[n, ca, h, w], &dy.shape()));
    }
    let mut da = Tensor4::zeros([n, ca, h, w]);
    let mut db = Tensor4::zeros([n, c - ca, h, w]);
    let split = ca * h * w;
    for s in 0..n {
        let g = dy.sample(s);
        da.sample_mut(s).copy_from_slice(&g[..split]);
        db.sample_mut(s).copy_from_slice(&g[split..]);
    }
    Ok((da, db))
}

pub fn add_forward<T: Real>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    if a.shape() != b.shape() {
        return Err(shape_mismatch(&a.shape(), &b.shape()));
    }
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// Both summands receive the upstream gradient unchanged.
pub fn add_backward<T: Real>(dy: &Tensor4<T>) -> (Tensor4<T>, Tensor4<T>) {
    (dy.clone(), dy.clone())
}

pub fn relu_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| v.max(T::zero()))
}

/// Derivative taken from the activation output `y`.
pub fn relu_backward<T: Real>(y: &Tensor4<T>, dy: &Tensor4<T>) -> Tensor4<T> {
    zip_map(y, dy, |yv, g| if yv > T::zero() { g } else { T::zero() })
}

pub fn leaky_relu_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    let a = T::of(LEAKY_SLOPE);
    x.map(|v| if v > T::zero() { v } else { a * v })
}

/// Derivative taken from the activation output `y` (sign is preserved).
pub fn leaky_relu_backward<T: Real>(y: &Tensor4<T>, dy: &Tensor4<T>) -> Tensor4<T> {
    let a = T::of(LEAKY_SLOPE);
    zip_map(y, dy, |yv, g| if yv > T::zero() { g } else { a * g })
}

fn zip_map<T: Real>(y: &Tensor4<T>, dy: &Tensor4<T>, f: impl Fn(T, T) -> T) -> Tensor4<T> {
    debug_assert_eq!(y.shape(), dy.shape());
    let data = y.data().iter().zip(dy.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor4::from_vec(y.shape(), data).expect("same shape")
}

/// Mean squared error and its gradient `2 (pred - target) / count`.
pub fn mse_loss<T: Real>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<(f64, Tensor4<T>)> {
    if pred.shape() != target.shape() {
        return Err(shape_mismatch(&target.shape(), &pred.shape()));
    }
    let count = pred.len() as f64;
    let mut sum = 0.0;
    let scale = T::of(2.0 / count);
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d.as_f64() * d.as_f64();
            d * scale
        })
        .collect();
    Ok((sum / count, Tensor4::from_vec(pred.shape(), grad)?))
}
