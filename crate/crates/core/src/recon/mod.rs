//! Occupancy grids, marching-cubes extraction and reconstruction metrics.

mod metrics;
mod tables;

use std::collections::HashMap;

use rayon::prelude::*;

use crate::geom::{Aabb, TriangleMesh, Vec3};
use crate::{Error, Result};

pub use metrics::{
    chamfer_l1, evaluate_geometry, f_score, normal_consistency, psnr, ssim, ssim_window, MetricReport, PSNR_SENTINEL,
};

/// Smallest grid resolution accepted by the samplers and the CLI.
pub const MIN_RESOLUTION: usize = 8;

/// `R³` values at the nodes of a regular lattice spanning `bounds` (corners included).
/// Node `(i, j, k)` is stored at `(k·R + j)·R + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    pub resolution: usize,
    pub bounds: Aabb,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(resolution: usize, bounds: Aabb, values: Vec<f64>) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
        }
        if values.len() != resolution.pow(3) {
            return Err(Error::InvalidInput(format!(
                "grid of resolution {resolution} needs {} values, got {}",
                resolution.pow(3),
                values.len()
            )));
        }
        let e = bounds.extent();
        if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) {
            return Err(Error::InvalidInput("grid bounds are degenerate".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value {i} is {}", values[i])));
        }
        Ok(ScalarGrid {
            resolution,
            bounds,
            values,
        })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.resolution + j) * self.resolution + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        node_position(&self.bounds, self.resolution, i, j, k)
    }

    /// Edge length of one cell along each axis.
    pub fn spacing(&self) -> Vec3 {
        self.bounds.extent() / (self.resolution - 1) as f64
    }
}

fn node_position(bounds: &Aabb, r: usize, i: usize, j: usize, k: usize) -> Vec3 {
    let e = bounds.extent();
    let s = (r - 1) as f64;
    bounds.min + Vec3::new(e.x * i as f64 / s, e.y * j as f64 / s, e.z * k as f64 / s)
}

/// Evaluates `field` at every node. `field` receives a batch of positions (one z-slice) and
/// must return one value per position; slices run in parallel, output order is fixed.
pub fn sample_grid<F>(bounds: Aabb, resolution: usize, field: F) -> Result<ScalarGrid>
where
    F: Fn(&[Vec3]) -> Result<Vec<f64>> + Sync,
{
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidInput(format!(
            "grid resolution {resolution} is below the minimum of {MIN_RESOLUTION}"
        )));
    }
    let r = resolution;
    let slices: Vec<Vec<f64>> = (0..r)
        .into_par_iter()
        .map(|k| {
            let pts: Vec<Vec3> = (0..r * r).map(|n| node_position(&bounds, r, n % r, n / r, k)).collect();
            let vals = field(&pts)?;
            if vals.len() != pts.len() {
                return Err(Error::InvalidInput("field returned the wrong number of values".into()));
            }
            Ok(vals)
        })
        .collect::<Result<_>>()?;
    ScalarGrid::new(r, bounds, slices.concat())
}

// Bourke corner numbering: corner c sits at these (i, j, k) offsets.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];
const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

// Keeps interpolated vertices off the cube corners so neighbouring triangles never collapse.
const T_EPS: f64 = 1e-7;

/// Extracts the `iso` level set, treating `value > iso` as inside.
/// Triangles are wound so normals point from inside to outside; shared edge vertices are welded.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Result<TriangleMesh> {
    let (lo, hi) = grid
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(lo <= iso && iso < hi) {
        return Err(Error::EmptySurface { iso });
    }
    let r = grid.resolution;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut weld: HashMap<(usize, u8), u32> = HashMap::new();
    for k in 0..r - 1 {
        for j in 0..r - 1 {
            for i in 0..r - 1 {
                let mut vals = [0.0; 8];
                let mut case = 0usize;
                for (c, o) in CORNERS.iter().enumerate() {
                    vals[c] = grid.get(i + o[0], j + o[1], k + o[2]);
                    if vals[c] <= iso {
                        case |= 1 << c;
                    }
                }
                let edges = tables::EDGE_TABLE[case];
                if edges == 0 {
                    continue;
                }
                let mut edge_vertex = [u32::MAX; 12];
                for (e, &[c0, c1]) in EDGES.iter().enumerate() {
                    if edges & (1 << e) == 0 {
                        continue;
                    }
                    let (a, b) = (CORNERS[c0], CORNERS[c1]);
                    // the edge is identified by its lower endpoint and axis
                    let axis = (0..3).find(|&d| a[d] != b[d]).unwrap();
                    let (lo_c, lo_v, hi_v) = if a[axis] < b[axis] {
                        (a, vals[c0], vals[c1])
                    } else {
                        (b, vals[c1], vals[c0])
                    };
                    let node = grid.index(i + lo_c[0], j + lo_c[1], k + lo_c[2]);
                    edge_vertex[e] = *weld.entry((node, axis as u8)).or_insert_with(|| {
                        let t = ((iso - lo_v) / (hi_v - lo_v)).clamp(T_EPS, 1.0 - T_EPS);
                        let p0 = grid.node_position(i + lo_c[0], j + lo_c[1], k + lo_c[2]);
                        let mut step = [0usize; 3];
                        step[axis] = 1;
                        let p1 = grid.node_position(i + lo_c[0] + step[0], j + lo_c[1] + step[1], k + lo_c[2] + step[2]);
                        vertices.push(p0 + (p1 - p0) * t);
                        (vertices.len() - 1) as u32
                    });
                }
                for tri in tables::TRIANGLE_TABLE[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let [a, b, c] = [0, 1, 2].map(|m| edge_vertex[tri[m] as usize]);
                    faces.push([a, b, c]);
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(Error::EmptySurface { iso });
    }
    TriangleMesh::new(vertices, faces)
}
