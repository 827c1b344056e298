use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{mesh::TriangleMesh, Vec3};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub normal: Vec3,
    pub face: usize,
    pub barycentric: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Surface,
    Near,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingPoint {
    pub position: Vec3,
    pub kind: PointKind,
}

/// Counts and spread of the near-surface / uniform training distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingParams {
    pub near_count: usize,
    pub uniform_count: usize,
    /// Standard deviation of the near-surface displacement, in units of the longest bbox edge.
    pub sigma: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            near_count: 4000,
            uniform_count: 1000,
            sigma: 0.05,
        }
    }
}

/// Cumulative area table for area-uniform face selection.
struct AreaTable {
    cumulative: Vec<f64>,
}

impl AreaTable {
    fn new(mesh: &TriangleMesh) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = (0..mesh.faces.len())
            .map(|f| {
                acc += mesh.face_area(f);
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::InvalidInput("mesh has zero surface area".into()));
        }
        Ok(AreaTable { cumulative })
    }

    fn pick(&self, r: f64) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = r * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.cumulative.len() - 1)
    }
}

fn sample_on(mesh: &TriangleMesh, table: &AreaTable, rng: &mut ChaCha8Rng) -> SurfaceSample {
    let face = table.pick(rng.random::<f64>());
    let r1: f64 = rng.random();
    let r2: f64 = rng.random();
    let s = r1.sqrt();
    let u = s * (1.0 - r2);
    let v = s * r2;
    let [a, b, c] = mesh.triangle(face);
    let point = a + (b - a) * u + (c - a) * v;
    SurfaceSample {
        point,
        normal: mesh.interpolate_normal(face, (u, v)),
        face,
        barycentric: (u, v),
    }
}

/// Area-uniform surface samples with interpolated unit normals. Deterministic in `seed`.
pub fn sample_surface(mesh: &TriangleMesh, count: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    if count == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    let table = AreaTable::new(mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| sample_on(mesh, &table, &mut rng)).collect())
}

/// Near-surface points (surface samples displaced by isotropic Gaussian noise with
/// std-dev `sigma · max_edge`) followed by uniform points in the bounding box inflated by 5%.
pub fn sample_training_points(mesh: &TriangleMesh, params: &SamplingParams, seed: u64) -> Result<Vec<TrainingPoint>> {
    if !(params.sigma > 0.0) {
        return Err(Error::InvalidInput("sigma must be positive".into()));
    }
    let bounds = mesh.bounds();
    let max_edge = bounds.max_edge();
    if !(max_edge > 0.0) {
        return Err(Error::InvalidInput("mesh bounding box is degenerate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(params.near_count + params.uniform_count);
    if params.near_count > 0 {
        let table = AreaTable::new(mesh)?;
        let normal = Normal::new(0.0, params.sigma * max_edge).expect("positive sigma");
        for _ in 0..params.near_count {
            let s = sample_on(mesh, &table, &mut rng);
            let offset = Vec3::new(
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            );
            out.push(TrainingPoint {
                position: s.point + offset,
                kind: PointKind::Near,
            });
        }
    }
    let inflated = bounds.inflated(0.05);
    for _ in 0..params.uniform_count {
        let e = inflated.extent();
        let p = inflated.min
            + Vec3::new(
                rng.random::<f64>() * e.x,
                rng.random::<f64>() * e.y,
                rng.random::<f64>() * e.z,
            );
        out.push(TrainingPoint {
            position: p,
            kind: PointKind::Uniform,
        });
    }
    Ok(out)
}
