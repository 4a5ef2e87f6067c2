//! 2D discrete Fourier transforms over `ndarray` planes.
//!
//! The forward transform is unnormalized; the inverse carries the
//! `1 / (H * W)` factor, so `idft2(dft2(x)) == x`.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};

pub fn dft2(image: &Array2<f64>) -> Result<Array2<Complex64>> {
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dft2 input".into()));
    }
    let mut spectrum = image.mapv(|v| Complex64::new(v, 0.0));
    transform(&mut spectrum, FftDirection::Forward);
    Ok(spectrum)
}

pub fn idft2(spectrum: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    if spectrum.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("idft2 input".into()));
    }
    let mut out = spectrum.clone();
    transform(&mut out, FftDirection::Inverse);
    let scale = 1.0 / out.len() as f64;
    out.mapv_inplace(|v| v * scale);
    Ok(out)
}

/// Real part of `idft2`, for spectra known to be Hermitian.
pub fn idft2_real(spectrum: &Array2<Complex64>) -> Result<Array2<f64>> {
    Ok(idft2(spectrum)?.mapv(|v| v.re))
}

fn transform(data: &mut Array2<Complex64>, direction: FftDirection) {
    let (h, w) = data.dim();
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft(w, direction);
    let col_fft = planner.plan_fft(h, direction);
    let mut buf = vec![Complex64::default(); w.max(h)];
    for mut row in data.axis_iter_mut(Axis(0)) {
        let line = &mut buf[..w];
        line.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
        row_fft.process(line);
        row.iter_mut().zip(line.iter()).for_each(|(v, b)| *v = *b);
    }
    for mut col in data.axis_iter_mut(Axis(1)) {
        let line = &mut buf[..h];
        line.iter_mut().zip(col.iter()).for_each(|(b, v)| *b = *v);
        col_fft.process(line);
        col.iter_mut().zip(line.iter()).for_each(|(v, b)| *v = *b);
    }
}

/// Signed frequency of bin `u` along an axis of length `n`, using the
/// centered (DC in the middle) convention.
pub fn signed_frequency(u: usize, n: usize) -> isize {
    ((u + n / 2) % n) as isize - (n / 2) as isize
}

/// Euclidean distance of every bin from the DC bin, in bin units.
pub fn frequency_radius(h: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |(u, v)| {
        let ku = signed_frequency(u, h) as f64;
        let kv = signed_frequency(v, w) as f64;
        (ku * ku + kv * kv).sqrt()
    })
}

/// Index of the conjugate-symmetric partner of bin `(u, v)`.
pub fn conjugate_bin(u: usize, v: usize, h: usize, w: usize) -> (usize, usize) {
    ((h - u) % h, (w - v) % w)
}
