//! Per-sample loss terms on logits, each with its gradient.

use super::sigmoid;
use crate::dirsphere::DirectionSet;
use crate::geom::{PointKind, Vec3};
use crate::oracle::ALBEDO_SENTINEL;
use crate::{Error, Result};

/// Subgradient of `|x|` with `sign(0) = 0`.
#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Binary cross-entropy of `sigmoid(z)` against `y`, in the log-sum-exp form.
/// Returns `(loss, d loss / d z)`.
#[inline]
pub fn bce_logits(z: f64, y: f64) -> (f64, f64) {
    let loss = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
    (loss, sigmoid(z) - y)
}

/// Mean BCE over the `n` visibility logits.
pub fn visibility_bce(logits: &[f64], target: &[f64]) -> f64 {
    visibility_bce_grad(logits, target, 0.0, &mut [])
}

/// As [`visibility_bce`]; when `scale != 0` adds `scale · ∂loss/∂z` into `dz`.
pub(crate) fn visibility_bce_grad(logits: &[f64], target: &[f64], scale: f64, dz: &mut [f64]) -> f64 {
    let n = logits.len() as f64;
    let mut sum = 0.0;
    for (i, (&z, &y)) in logits.iter().zip(target).enumerate() {
        let (l, d) = bce_logits(z, y);
        sum += l;
        if scale != 0.0 {
            dz[i] += scale * d / n;
        }
    }
    sum / n
}

/// `(1/n)·Σ_i |σ(z_i) − V_i|·max(n·ω_i, 0)` for a surface sample.
pub fn transfer_loss(logits: &[f64], target: &[f64], normal: Vec3, kind: PointKind, dirs: &DirectionSet) -> Result<f64> {
    if kind != PointKind::Surface {
        return Err(Error::InvalidInput("transfer loss applies to surface samples only".into()));
    }
    Ok(transfer_grad(logits, target, normal, dirs, 0.0, &mut []))
}

pub(crate) fn transfer_grad(logits: &[f64], target: &[f64], normal: Vec3, dirs: &DirectionSet, scale: f64, dz: &mut [f64]) -> f64 {
    let n = logits.len() as f64;
    let mut sum = 0.0;
    for (i, (&z, &v)) in logits.iter().zip(target).enumerate() {
        let c = normal.dot(dirs.get(i)).max(0.0);
        if c == 0.0 {
            continue;
        }
        let s = sigmoid(z);
        let diff = s - v;
        sum += diff.abs() * c;
        if scale != 0.0 {
            dz[i] += scale * sign(diff) * c * s * (1.0 - s) / n;
        }
    }
    sum / n
}

pub fn occupancy_bce(logit: f64, inside: bool) -> f64 {
    bce_logits(logit, if inside { 1.0 } else { 0.0 }).0
}

/// Mean absolute error of `sigmoid(logits)` over the channels whose target is not the
/// sentinel; `None` when every channel is a sentinel.
pub fn albedo_l1(logits: &[f64; 3], target: &[f64; 3]) -> Option<f64> {
    albedo_grad(logits, target, 0.0, &mut [])
}

pub(crate) fn albedo_grad(logits: &[f64], target: &[f64; 3], scale: f64, dz: &mut [f64]) -> Option<f64> {
    let valid = target.iter().filter(|&&t| t != ALBEDO_SENTINEL).count();
    if valid == 0 {
        return None;
    }
    let mut sum = 0.0;
    for c in 0..3 {
        if target[c] == ALBEDO_SENTINEL {
            continue;
        }
        let s = sigmoid(logits[c]);
        let diff = s - target[c];
        sum += diff.abs();
        if scale != 0.0 {
            dz[c] += scale * sign(diff) * s * (1.0 - s) / valid as f64;
        }
    }
    Some(sum / valid as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn half_prediction_gives_ln2() {
        for y in [0.0, 1.0] {
            assert!((visibility_bce(&[0.0; 16], &[y; 16]) - 2f64.ln()).abs() < 1e-15);
            assert!((occupancy_bce(0.0, y == 1.0) - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn confident_correct_prediction_is_nearly_free() {
        // logit of 1 − 1e−7
        let z = (1.0f64 - 1e-7).ln() - 1e-7f64.ln();
        assert!(visibility_bce(&[z, -z], &[1.0, 0.0]) < 1e-6);
        // far logits never overflow
        assert!(visibility_bce(&[1e4, -1e4], &[0.0, 1.0]).is_finite());
    }

    #[test]
    fn matches_textbook_formulas() {
        let d = DirectionSet::fibonacci(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let z: Vec<f64> = (0..32).map(|_| rng.random_range(-4.0..4.0)).collect();
            let y: Vec<f64> = (0..32).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
            let p: Vec<f64> = z.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
            let bce: f64 = p.iter().zip(&y).map(|(p, y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())).sum::<f64>() / 32.0;
            assert!((visibility_bce(&z, &y) - bce).abs() < 1e-12);
            let n = crate::dirsphere::random_unit(&mut rng);
            let t: f64 = (0..32)
                .map(|i| {
                    let c = n.dot(d.get(i)).max(0.0);
                    (p[i] * c - y[i] * c).abs()
                })
                .sum::<f64>()
                / 32.0;
            assert!((transfer_loss(&z, &y, n, PointKind::Surface, &d).unwrap() - t).abs() < 1e-12);
        }
        assert!(transfer_loss(&[0.0; 32], &[0.0; 32], Vec3::Z, PointKind::Near, &d).is_err());
    }

    #[test]
    fn back_hemisphere_errors_are_free() {
        let d = DirectionSet::fibonacci(64).unwrap();
        let target: Vec<f64> = (0..64).map(|i| (i % 2) as f64).collect();
        let good: Vec<f64> = target.iter().map(|&v| if v == 1.0 { 30.0 } else { -30.0 }).collect();
        let mut bad = good.clone();
        // flip every direction with n·ω ≤ 0 for n = +z
        for i in 0..64 {
            if d.get(i).z <= 0.0 {
                bad[i] = -bad[i] * 3.0 + 0.7;
            }
        }
        let a = transfer_loss(&good, &target, Vec3::Z, PointKind::Surface, &d).unwrap();
        let b = transfer_loss(&bad, &target, Vec3::Z, PointKind::Surface, &d).unwrap();
        assert_eq!(a, b);
        assert!(a < 1e-12);
    }

    #[test]
    fn albedo_terms() {
        let z = [0.3, -1.2, 2.0];
        let t = [sigmoid(0.3), sigmoid(-1.2), sigmoid(2.0)];
        assert_eq!(albedo_l1(&z, &t), Some(0.0));
        let mut dz = [0.0; 3];
        albedo_grad(&z, &t, 1.0, &mut dz);
        assert_eq!(dz, [0.0; 3]);
        // sentinel channels drop out of the mean
        let partial = [ALBEDO_SENTINEL, sigmoid(-1.2) + 0.3, ALBEDO_SENTINEL];
        assert!((albedo_l1(&z, &partial).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(albedo_l1(&z, &[ALBEDO_SENTINEL; 3]), None);
    }
}
