use std::f64::consts::PI;

use super::FieldModel;
use crate::geom::Vec3;

/// The feature grid spans `[-h, h]³`, the unit-normalized box inflated by 10%.
pub const GRID_HALF_EXTENT: f64 = 0.55;

/// Trilinear footprint of a point in the feature grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridTaps {
    /// Parameter offset of each corner's channel vector.
    pub offsets: [usize; 8],
    pub weights: [f64; 8],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    /// `[x, y, z, (sin, cos) per octave per axis, grid channels]`.
    pub values: Vec<f64>,
    /// True when the point lay outside the grid and the lookup was clamped.
    pub clamped: bool,
}

pub(crate) fn positional(x: Vec3, octaves: usize, out: &mut Vec<f64>) {
    out.extend_from_slice(&[x.x, x.y, x.z]);
    for l in 0..octaves {
        let f = (1u64 << l) as f64 * PI;
        for a in 0..3 {
            let (s, c) = (f * x[a]).sin_cos();
            out.push(s);
            out.push(c);
        }
    }
}

pub(crate) fn grid_taps(g: usize, channels: usize, x: Vec3) -> (GridTaps, bool) {
    let scale = (g - 1) as f64 / (2.0 * GRID_HALF_EXTENT);
    let mut clamped = false;
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let u = (x[a] + GRID_HALF_EXTENT) * scale;
        // rounding slack so points on the boundary are not flagged
        if !(u >= -1e-9 && u <= (g - 1) as f64 + 1e-9) {
            clamped = true;
        }
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, (g - 1) as f64) };
        let i = (u.floor() as usize).min(g - 2);
        base[a] = i;
        frac[a] = u - i as f64;
    }
    let mut offsets = [0; 8];
    let mut weights = [0.0; 8];
    for c in 0..8 {
        let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
        let node = ((base[2] + dz) * g + base[1] + dy) * g + base[0] + dx;
        offsets[c] = node * channels;
        let w = |d: usize, f: f64| if d == 1 { f } else { 1.0 - f };
        weights[c] = w(dx, frac[0]) * w(dy, frac[1]) * w(dz, frac[2]);
    }
    (GridTaps { offsets, weights }, clamped)
}

pub(crate) fn grid_features(params: &[f64], taps: &GridTaps, channels: usize, out: &mut Vec<f64>) {
    let start = out.len();
    out.resize(start + channels, 0.0);
    for (&o, &w) in taps.offsets.iter().zip(&taps.weights) {
        if w == 0.0 {
            continue;
        }
        for c in 0..channels {
            out[start + c] += w * params[o + c];
        }
    }
}

/// Shared encoding of `x`: raw position, positional encoding and trilinear grid features.
pub fn encode(model: &FieldModel, x: Vec3) -> Encoded {
    let arch = &model.arch;
    let mut values = Vec::with_capacity(arch.encoding_dim());
    positional(x, arch.octaves, &mut values);
    let (taps, clamped) = grid_taps(arch.grid_resolution, arch.grid_channels, x);
    grid_features(&model.params[model.layout.grid.0..model.layout.grid.1], &taps, arch.grid_channels, &mut values);
    Encoded { values, clamped }
}
