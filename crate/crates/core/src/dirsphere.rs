//! Fixed direction sets on the unit sphere and top-k cosine interpolation of
//! visibility sampled on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{sample_training_points, Bvh, Ray, SamplingParams, TriangleMesh, Vec3};
use crate::oracle::{trace_visibility, VISIBILITY_T_MIN};
use crate::{Error, Result};

/// Interpolation neighbourhood used when none is configured.
pub const DEFAULT_K: usize = 4;
/// Cosines below this are clamped so interpolation weights stay positive.
pub const MIN_COSINE: f64 = 1e-6;
/// Interpolated visibility at or above this counts as visible.
pub const VISIBLE_THRESHOLD: f64 = 0.5;

/// `n` unit directions from the midpoint Fibonacci lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionSet {
    directions: Vec<Vec3>,
}

impl DirectionSet {
    /// Point `i` has `z = 1 − (2i+1)/n` and azimuth `2πi(1 − 1/φ)` with φ the golden ratio.
    pub fn fibonacci(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("direction count must be at least 1".into()));
        }
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        let step = 2.0 * std::f64::consts::PI * (1.0 - 1.0 / golden);
        let directions = (0..n)
            .map(|i| {
                let z = 1.0 - (2 * i + 1) as f64 / n as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = step * i as f64;
                Vec3::new(r * phi.cos(), r * phi.sin(), z)
            })
            .collect();
        Ok(DirectionSet { directions })
    }

    /// Arbitrary unit directions (normalized on construction).
    pub fn from_directions(directions: Vec<Vec3>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::InvalidInput("direction set is empty".into()));
        }
        Ok(DirectionSet {
            directions: directions.into_iter().map(Vec3::normalized).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn get(&self, i: usize) -> Vec3 {
        self.directions[i]
    }

    /// Indices of the `k` directions with the largest dot product against `w`
    /// (ties broken by lower index), each with its cosine.
    pub fn top_k(&self, w: Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.clamp(1, self.len());
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        for (i, d) in self.directions.iter().enumerate() {
            let c = d.dot(w);
            if best.len() == k && c <= best[k - 1].1 {
                continue;
            }
            let pos = best.partition_point(|&(_, bc)| bc >= c);
            best.insert(pos, (i, c));
            best.truncate(k);
        }
        best
    }
}

/// Cosine-weighted average of `values` over the `k` sample directions nearest to `w`.
/// Cosines are clamped to at least [`MIN_COSINE`], so the result is a convex combination.
pub fn interpolate_visibility(values: &[f64], dirs: &DirectionSet, w: Vec3, k: usize) -> f64 {
    debug_assert_eq!(values.len(), dirs.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, c) in dirs.top_k(w, k) {
        let c = c.max(MIN_COSINE);
        num += values[i] * c;
        den += c;
    }
    num / den
}

/// Fraction of `(point, direction)` pairs whose interpolated, thresholded visibility
/// matches ray-traced visibility along random test directions.
///
/// Query points follow the training distribution (4:1 near-surface to uniform,
/// σ = 0.05). The mesh must be watertight.
pub fn interpolation_accuracy(
    mesh: &TriangleMesh,
    dirs: &DirectionSet,
    num_points: usize,
    num_test_dirs: usize,
    k: usize,
    seed: u64,
) -> Result<f64> {
    mesh.check_watertight()?;
    if num_points == 0 || num_test_dirs == 0 {
        return Err(Error::InvalidInput("point and test-direction counts must be positive".into()));
    }
    let bvh = Bvh::build(mesh)?;
    let near = num_points * 4 / 5;
    let params = SamplingParams {
        near_count: near,
        uniform_count: num_points - near,
        sigma: 0.05,
    };
    let points = sample_training_points(mesh, &params, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_d125);
    let mut correct = 0usize;
    let mut values = vec![0.0; dirs.len()];
    for p in &points {
        let p = p.position;
        let inside = bvh.point_inside(p);
        if inside {
            values.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let mask = trace_visibility(&bvh, p, dirs);
            for (i, v) in values.iter_mut().enumerate() {
                *v = if mask.get(i) { 1.0 } else { 0.0 };
            }
        }
        for _ in 0..num_test_dirs {
            let w = random_unit(&mut rng);
            let predicted = interpolate_visibility(&values, dirs, w, k) >= VISIBLE_THRESHOLD;
            let truth = !inside
                && !bvh.any_hit(&Ray::new(p, w).with_range(VISIBILITY_T_MIN, f64::INFINITY));
            if predicted == truth {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / (points.len() * num_test_dirs) as f64)
}

/// Uniform random direction on the sphere.
pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{mat3_mul_vec, rotation_matrix, shapes};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn single_direction_sits_on_equator() {
        let d = DirectionSet::fibonacci(1).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.get(0).z, 0.0);
        assert!((d.get(0).norm() - 1.0).abs() < 1e-15);
        assert!(DirectionSet::fibonacci(0).is_err());
    }

    #[test]
    fn sixty_four_directions_are_well_spread() {
        let d = DirectionSet::fibonacci(64).unwrap();
        let mut min_angle = f64::INFINITY;
        for i in 0..64 {
            assert!((d.get(i).norm() - 1.0).abs() < 1e-12);
            for j in i + 1..64 {
                let a = d.get(i).dot(d.get(j)).clamp(-1.0, 1.0).acos();
                min_angle = min_angle.min(a);
            }
        }
        assert!(min_angle.to_degrees() > 15.0, "min angle {}", min_angle.to_degrees());
        let mean = d.directions().iter().fold(Vec3::ZERO, |a, b| a + *b) / 64.0;
        assert!(mean.norm() < 0.02);
    }

    #[test]
    fn exact_direction_with_k1_returns_its_value() {
        let d = DirectionSet::fibonacci(64).unwrap();
        let values: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
        assert_eq!(interpolate_visibility(&values, &d, d.get(5), 1), values[5]);
    }

    #[test]
    fn matches_straight_line_formula() {
        // Oracle: sort all cosines, take the k largest, weight by clamped cosine.
        let d = DirectionSet::fibonacci(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let values: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
            let w = random_unit(&mut rng);
            let mut cos: Vec<(usize, f64)> = d.directions().iter().map(|x| x.dot(w)).enumerate().collect();
            cos.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let top = &cos[..4];
            let num: f64 = top.iter().map(|&(i, c)| values[i] * c.max(1e-6)).sum();
            let den: f64 = top.iter().map(|&(_, c)| c.max(1e-6)).sum();
            let got = interpolate_visibility(&values, &d, w, 4);
            assert!((got - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn rotating_everything_leaves_interpolation_unchanged() {
        let d = DirectionSet::fibonacci(32).unwrap();
        let r = rotation_matrix(Vec3::new(0.2, -0.7, 0.4), 1.1);
        let rotated = DirectionSet::from_directions(d.directions().iter().map(|&x| mat3_mul_vec(&r, x)).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let values: Vec<f64> = (0..32).map(|_| rng.random_range(0.0..1.0)).collect();
        for _ in 0..200 {
            let w = random_unit(&mut rng);
            let a = interpolate_visibility(&values, &d, w, 4);
            let b = interpolate_visibility(&values, &rotated, mat3_mul_vec(&r, w), 4);
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn full_neighbourhood_is_cosine_weighted_average() {
        let d = DirectionSet::fibonacci(16).unwrap();
        let values: Vec<f64> = (0..16).map(|i| (i % 2) as f64).collect();
        let w = Vec3::new(0.3, 0.4, 0.866).normalized();
        let num: f64 = (0..16).map(|i| values[i] * d.get(i).dot(w).max(1e-6)).sum();
        let den: f64 = (0..16).map(|i| d.get(i).dot(w).max(1e-6)).sum();
        assert!((interpolate_visibility(&values, &d, w, 16) - num / den).abs() < 1e-12);
    }

    #[test]
    fn convex_sphere_is_interpolated_accurately() {
        // exterior-only points: uniform samples outside a small sphere
        let s = shapes::icosphere(3, 0.3);
        let d = DirectionSet::fibonacci(64).unwrap();
        let acc = interpolation_accuracy(&s, &d, 200, 200, 4, 1).unwrap();
        assert!(acc > 0.9, "accuracy {acc}");
        let again = interpolation_accuracy(&s, &d, 200, 200, 4, 1).unwrap();
        assert_eq!(acc, again);
    }

    #[test]
    fn one_direction_is_worse_on_concave_scene() {
        let m = shapes::two_box_scene();
        let acc1 = interpolation_accuracy(&m, &DirectionSet::fibonacci(1).unwrap(), 200, 100, 1, 3).unwrap();
        let acc64 = interpolation_accuracy(&m, &DirectionSet::fibonacci(64).unwrap(), 200, 100, 4, 3).unwrap();
        assert!(acc64 > acc1 + 0.1, "{acc1} vs {acc64}");
    }

    proptest! {
        #[test]
        fn interpolation_is_convex(
            values in proptest::collection::vec(0.0f64..=1.0, 24),
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
            k in 1usize..=24,
        ) {
            let w = Vec3::new(x, y, z);
            prop_assume!(w.norm() > 1e-3);
            let w = w.normalized();
            let d = DirectionSet::fibonacci(24).unwrap();
            let top = d.top_k(w, k);
            let lo = top.iter().map(|&(i, _)| values[i]).fold(f64::INFINITY, f64::min);
            let hi = top.iter().map(|&(i, _)| values[i]).fold(f64::NEG_INFINITY, f64::max);
            let r = interpolate_visibility(&values, &d, w, k);
            prop_assert!(r >= lo - 1e-12 && r <= hi + 1e-12);
            let c = interpolate_visibility(&vec![0.37; 24], &d, w, k);
            prop_assert!((c - 0.37).abs() < 1e-12);
        }
    }
}
