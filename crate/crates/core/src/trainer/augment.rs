//! Geometric augmentation. Every function draws once per example and
//! applies the same transform to all input planes and the target.

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::stack::Plane;

/// Shifts `plane` by `(dy, dx)`; vacated pixels take `fill`.
pub fn translate_plane(plane: &Plane, dy: isize, dx: isize, fill: f64) -> Plane {
    let (h, w) = plane.dim();
    Plane::from_shape_fn((h, w), |(y, x)| {
        let sy = y as isize - dy;
        let sx = x as isize - dx;
        if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
            plane[[sy as usize, sx as usize]]
        } else {
            fill
        }
    })
}

/// Signed shift with magnitude uniform in `0..=max_shift` per axis.
pub fn draw_translation<R: Rng + ?Sized>(rng: &mut R, max_shift: usize) -> (isize, isize) {
    let mut one = || {
        let mag = rng.random_range(0..=max_shift) as isize;
        if rng.random_bool(0.5) {
            -mag
        } else {
            mag
        }
    };
    let dy = one();
    let dx = one();
    (dy, dx)
}

fn plane_min(p: &Plane) -> f64 {
    p.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Random translation shared by inputs and target. Vacated pixels are
/// filled with each image's minimum, i.e. the scaled MRI background.
pub fn augment_mri<R: Rng + ?Sized>(
    inputs: &[Plane],
    target: &Plane,
    max_shift: usize,
    rng: &mut R,
) -> Result<(Vec<Plane>, Plane)> {
    let (h, w) = target.dim();
    if max_shift >= h.min(w) {
        return Err(Error::InvalidConfig(format!(
            "translation up to {max_shift} pixels does not fit a {h}x{w} image"
        )));
    }
    let (dy, dx) = draw_translation(rng, max_shift);
    let shift = |p: &Plane| translate_plane(p, dy, dx, plane_min(p));
    Ok((inputs.iter().map(shift).collect(), shift(target)))
}

/// One microscopy augmentation draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MicroscopyDraw {
    /// Counter-clockwise quarter turns, 0..4.
    pub quarter_turns: u8,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    pub crop_y: usize,
    pub crop_x: usize,
}

impl MicroscopyDraw {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, h: usize, w: usize, crop: usize) -> Result<Self> {
        if h < crop || w < crop || crop == 0 {
            return Err(Error::InvalidConfig(format!("cannot crop {crop}x{crop} from a {h}x{w} image")));
        }
        let quarter_turns = rng.random_range(0..4u8);
        let flip_horizontal = rng.random_bool(0.5);
        let flip_vertical = rng.random_bool(0.5);
        // size after rotation
        let (rh, rw) = if quarter_turns % 2 == 0 { (h, w) } else { (w, h) };
        Ok(Self {
            quarter_turns,
            flip_horizontal,
            flip_vertical,
            crop_y: rng.random_range(0..=rh - crop),
            crop_x: rng.random_range(0..=rw - crop),
        })
    }

    /// Rotates, flips, then crops a `crop × crop` window.
    pub fn apply(&self, plane: &Plane, crop: usize) -> Plane {
        let mut p = rotate90(plane, self.quarter_turns);
        if self.flip_horizontal {
            p.invert_axis(ndarray::Axis(1));
        }
        if self.flip_vertical {
            p.invert_axis(ndarray::Axis(0));
        }
        p.slice(ndarray::s![self.crop_y..self.crop_y + crop, self.crop_x..self.crop_x + crop])
            .to_owned()
    }
}

/// Counter-clockwise rotation by `k` quarter turns.
pub fn rotate90(plane: &Plane, k: u8) -> Plane {
    let (h, w) = plane.dim();
    match k % 4 {
        0 => plane.clone(),
        1 => Plane::from_shape_fn((w, h), |(y, x)| plane[[x, w - 1 - y]]),
        2 => Plane::from_shape_fn((h, w), |(y, x)| plane[[h - 1 - y, w - 1 - x]]),
        _ => Plane::from_shape_fn((w, h), |(y, x)| plane[[h - 1 - x, y]]),
    }
}

pub fn augment_microscopy<R: Rng + ?Sized>(
    inputs: &[Plane],
    target: &Plane,
    crop: usize,
    rng: &mut R,
) -> Result<(Vec<Plane>, Plane)> {
    let (h, w) = target.dim();
    let draw = MicroscopyDraw::sample(rng, h, w, crop)?;
    Ok((inputs.iter().map(|p| draw.apply(p, crop)).collect(), draw.apply(target, crop)))
}
