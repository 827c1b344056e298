//! Bounding volume hierarchy over a triangle mesh: nearest-hit, any-hit,
//! crossing-parity inside tests and closest-point queries.
//!
//! The tree is built with a binned surface-area heuristic (16 bins) and leaves
//! hold at most four triangles. Triangles are intersected with the
//! Möller–Trumbore test, the same routine used by [`brute_force_intersect`], so
//! both paths produce bitwise-identical `t` values for the same face.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mesh::{Aabb, TriangleMesh};
use super::Vec3;
use crate::{Error, Result};

const SAH_BINS: usize = 16;
const MAX_LEAF_SIZE: usize = 4;
/// Seed for the three parity-ray directions used by [`Bvh::point_inside`].
const PARITY_SEED: u64 = 0x5eed_1a7e;
/// Below this many triangles closest-point queries scan every face.
const BRUTE_FORCE_CLOSEST: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    /// Ray over `(0, ∞)`; `direction` is normalized.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Ray {
            origin,
            direction: direction.normalized(),
            t_min: 0.0,
            t_max: f64::INFINITY,
        }
    }

    pub fn with_range(mut self, t_min: f64, t_max: f64) -> Self {
        self.t_min = t_min;
        self.t_max = t_max;
        self
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub face: usize,
    /// Barycentric `(u, v)`; the hit point is `(1-u-v)·a + u·b + v·c`.
    pub barycentric: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec3,
    pub distance: f64,
    pub face: usize,
    pub barycentric: (f64, f64),
}

/// Möller–Trumbore. Returns `(t, u, v)` for hits with `t` strictly inside the ray range.
#[inline]
pub fn intersect_triangle(ray: &Ray, tri: &[Vec3; 3]) -> Option<(f64, f64, f64)> {
    let [a, b, c] = *tri;
    let e1 = b - a;
    let e2 = c - a;
    let p = ray.direction.cross(e2);
    let det = e1.dot(p);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - a;
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.direction.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    if t > ray.t_min && t < ray.t_max {
        Some((t, u, v))
    } else {
        None
    }
}

#[inline]
fn better(t: f64, face: usize, best: &Option<Hit>) -> bool {
    match best {
        None => true,
        Some(b) => t < b.t || (t == b.t && face < b.face),
    }
}

/// Nearest hit by testing every face; ties on `t` go to the lowest face index.
pub fn brute_force_intersect(mesh: &TriangleMesh, ray: &Ray) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for face in 0..mesh.faces.len() {
        if let Some((t, u, v)) = intersect_triangle(ray, &mesh.triangle(face)) {
            if better(t, face, &best) {
                best = Some(Hit {
                    t,
                    face,
                    barycentric: (u, v),
                });
            }
        }
    }
    best
}

/// Closest point on triangle `abc` to `p` with its barycentric `(u, v)`.
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> (Vec3, (f64, f64)) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, (0.0, 0.0));
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, (1.0, 0.0));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, (v, 0.0));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, (0.0, 1.0));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, (0.0, w));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, (1.0 - w, w));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, (v, w))
}

/// Tree node. Interior nodes have `count == 0` and children at `first` and `first + 1`;
/// leaves cover `order[first .. first + count]`.
#[derive(Clone, Copy, Debug)]
pub struct BvhNode {
    pub bounds: Aabb,
    pub first: u32,
    pub count: u32,
}

impl BvhNode {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    /// Triangles in leaf order.
    tris: Vec<[Vec3; 3]>,
    /// Original face index of each entry of `tris`.
    order: Vec<u32>,
    parity_dirs: [Vec3; 3],
}

#[inline]
fn ray_box(bounds: &Aabb, origin: Vec3, inv_dir: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
    let mut t0 = t_min;
    let mut t1 = t_max;
    for axis in 0..3 {
        let inv = inv_dir[axis];
        let mut near = (bounds.min[axis] - origin[axis]) * inv;
        let mut far = (bounds.max[axis] - origin[axis]) * inv;
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        // NaN (0 * inf on a slab plane) must not shrink the interval.
        if near > t0 {
            t0 = near;
        }
        // Conservative widening against rounding in the slab distances.
        let far = far * (1.0 + 4.0 * f64::EPSILON);
        if far < t1 {
            t1 = far;
        }
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

struct BuildItem {
    bounds: Aabb,
    centroid: Vec3,
    face: u32,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Result<Bvh> {
        if mesh.faces.is_empty() {
            return Err(Error::InvalidInput("cannot build a BVH over an empty mesh".into()));
        }
        mesh.check_non_degenerate()?;
        let mut items: Vec<BuildItem> = (0..mesh.faces.len())
            .map(|f| {
                let t = mesh.triangle(f);
                let bounds = Aabb::from_points(&t);
                BuildItem {
                    bounds,
                    centroid: (t[0] + t[1] + t[2]) / 3.0,
                    face: f as u32,
                }
            })
            .collect();
        let root_bounds = items.iter().fold(Aabb::EMPTY, |b, it| b.union(it.bounds));
        let pad = 1e-9 * (root_bounds.max_edge() + 1e-300);

        let mut nodes = Vec::with_capacity(2 * items.len() / MAX_LEAF_SIZE + 1);
        nodes.push(BvhNode {
            bounds: root_bounds,
            first: 0,
            count: 0,
        });
        // (node index, start, end) into `items`
        let mut stack = vec![(0usize, 0usize, items.len())];
        while let Some((node, start, end)) = stack.pop() {
            let slice = &mut items[start..end];
            let bounds = slice
                .iter()
                .fold(Aabb::EMPTY, |b, it| b.union(it.bounds))
                .padded(pad);
            nodes[node].bounds = bounds;
            if slice.len() <= MAX_LEAF_SIZE {
                nodes[node].first = start as u32;
                nodes[node].count = slice.len() as u32;
                continue;
            }
            let mid = start + split_items(slice);
            let left = nodes.len();
            nodes.push(BvhNode {
                bounds: Aabb::EMPTY,
                first: 0,
                count: 0,
            });
            nodes.push(BvhNode {
                bounds: Aabb::EMPTY,
                first: 0,
                count: 0,
            });
            nodes[node].first = left as u32;
            nodes[node].count = 0;
            stack.push((left + 1, mid, end));
            stack.push((left, start, mid));
        }

        let order: Vec<u32> = items.iter().map(|it| it.face).collect();
        let tris = order.iter().map(|&f| mesh.triangle(f as usize)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(PARITY_SEED);
        let mut random_dir = || loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v / n;
            }
        };
        let parity_dirs = [random_dir(), random_dir(), random_dir()];
        Ok(Bvh {
            nodes,
            tris,
            order,
            parity_dirs,
        })
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    /// Original face indices of the triangles in `node` (empty for interior nodes).
    pub fn leaf_faces(&self, node: &BvhNode) -> &[u32] {
        &self.order[node.first as usize..(node.first + node.count) as usize]
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Nearest hit with `t` in `(t_min, t_max)`.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        let inv = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut best: Option<Hit> = None;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        if let Some(t) = ray_box(&self.nodes[0].bounds, ray.origin, inv, ray.t_min, ray.t_max) {
            stack.push((0, t));
        }
        while let Some((idx, entry)) = stack.pop() {
            if let Some(b) = &best {
                if entry > b.t {
                    continue;
                }
            }
            let node = &self.nodes[idx as usize];
            if node.is_leaf() {
                for i in node.first..node.first + node.count {
                    if let Some((t, u, v)) = intersect_triangle(ray, &self.tris[i as usize]) {
                        let face = self.order[i as usize] as usize;
                        if better(t, face, &best) {
                            best = Some(Hit {
                                t,
                                face,
                                barycentric: (u, v),
                            });
                        }
                    }
                }
                continue;
            }
            let t_max = best.map_or(ray.t_max, |b| b.t * (1.0 + 4.0 * f64::EPSILON) + f64::MIN_POSITIVE);
            let l = node.first;
            let r = node.first + 1;
            let tl = ray_box(&self.nodes[l as usize].bounds, ray.origin, inv, ray.t_min, t_max);
            let tr = ray_box(&self.nodes[r as usize].bounds, ray.origin, inv, ray.t_min, t_max);
            match (tl, tr) {
                (Some(a), Some(b)) => {
                    // nearer child popped first
                    if a <= b {
                        stack.push((r, b));
                        stack.push((l, a));
                    } else {
                        stack.push((l, a));
                        stack.push((r, b));
                    }
                }
                (Some(a), None) => stack.push((l, a)),
                (None, Some(b)) => stack.push((r, b)),
                (None, None) => {}
            }
        }
        best
    }

    /// True iff some triangle is hit with `t` in `(t_min, t_max)`. Stops at the first hit.
    pub fn any_hit(&self, ray: &Ray) -> bool {
        let inv = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            if ray_box(&node.bounds, ray.origin, inv, ray.t_min, ray.t_max).is_none() {
                continue;
            }
            if node.is_leaf() {
                for i in node.first..node.first + node.count {
                    if intersect_triangle(ray, &self.tris[i as usize]).is_some() {
                        return true;
                    }
                }
            } else {
                stack.push(node.first + 1);
                stack.push(node.first);
            }
        }
        false
    }

    /// Number of triangles crossed by the ray within its range.
    pub fn count_hits(&self, ray: &Ray) -> usize {
        let inv = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut stack: Vec<u32> = vec![0];
        let mut count = 0;
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            if ray_box(&node.bounds, ray.origin, inv, ray.t_min, ray.t_max).is_none() {
                continue;
            }
            if node.is_leaf() {
                count += (node.first..node.first + node.count)
                    .filter(|&i| intersect_triangle(ray, &self.tris[i as usize]).is_some())
                    .count();
            } else {
                stack.push(node.first + 1);
                stack.push(node.first);
            }
        }
        count
    }

    /// Crossing-parity inside test with a majority vote over the three fixed
    /// parity directions. Requires a watertight mesh.
    pub fn point_inside(&self, p: Vec3) -> bool {
        self.point_inside_with(p, &self.parity_dirs)
    }

    /// Majority vote of crossing parity along each of `dirs`.
    pub fn point_inside_with(&self, p: Vec3, dirs: &[Vec3]) -> bool {
        let odd = dirs
            .iter()
            .filter(|d| self.count_hits(&Ray::new(p, **d)) % 2 == 1)
            .count();
        2 * odd > dirs.len()
    }

    pub fn parity_directions(&self) -> &[Vec3; 3] {
        &self.parity_dirs
    }

    /// Closest surface point to `p`. Meshes under 1000 triangles are scanned directly.
    pub fn closest_point(&self, p: Vec3) -> ClosestPoint {
        let mut best = ClosestPoint {
            point: p,
            distance: f64::INFINITY,
            face: usize::MAX,
            barycentric: (0.0, 0.0),
        };
        let mut best_d2 = f64::INFINITY;
        let visit = |i: usize, best: &mut ClosestPoint, best_d2: &mut f64| {
            let [a, b, c] = self.tris[i];
            let (q, bary) = closest_point_on_triangle(p, a, b, c);
            let d2 = (q - p).norm_squared();
            let face = self.order[i] as usize;
            if d2 < *best_d2 || (d2 == *best_d2 && face < best.face) {
                *best_d2 = d2;
                *best = ClosestPoint {
                    point: q,
                    distance: d2.sqrt(),
                    face,
                    barycentric: bary,
                };
            }
        };
        if self.tris.len() < BRUTE_FORCE_CLOSEST {
            for i in 0..self.tris.len() {
                visit(i, &mut best, &mut best_d2);
            }
            return best;
        }
        let mut stack: Vec<(u32, f64)> = vec![(0, self.nodes[0].bounds.distance_squared(p))];
        while let Some((idx, d2)) = stack.pop() {
            if d2 > best_d2 {
                continue;
            }
            let node = &self.nodes[idx as usize];
            if node.is_leaf() {
                for i in node.first..node.first + node.count {
                    visit(i as usize, &mut best, &mut best_d2);
                }
                continue;
            }
            let l = node.first;
            let r = l + 1;
            let dl = self.nodes[l as usize].bounds.distance_squared(p);
            let dr = self.nodes[r as usize].bounds.distance_squared(p);
            if dl <= dr {
                stack.push((r, dr));
                stack.push((l, dl));
            } else {
                stack.push((l, dl));
                stack.push((r, dr));
            }
        }
        best
    }
}

/// Partition `items` in place and return the split position (0 < pos < len).
fn split_items(items: &mut [BuildItem]) -> usize {
    let n = items.len();
    let cb = items
        .iter()
        .fold(Aabb::EMPTY, |b, it| b.grow(it.centroid));
    let ext = cb.extent();

    let mut best: Option<(f64, usize, usize)> = None; // (cost, axis, bin boundary)
    for axis in 0..3 {
        if ext[axis] <= 0.0 {
            continue;
        }
        let scale = SAH_BINS as f64 / ext[axis];
        let bin_of = |c: f64| (((c - cb.min[axis]) * scale) as usize).min(SAH_BINS - 1);
        let mut counts = [0usize; SAH_BINS];
        let mut boxes = [Aabb::EMPTY; SAH_BINS];
        for it in items.iter() {
            let b = bin_of(it.centroid[axis]);
            counts[b] += 1;
            boxes[b] = boxes[b].union(it.bounds);
        }
        // sweep from the right to get suffix areas
        let mut right_area = [0.0; SAH_BINS];
        let mut right_count = [0usize; SAH_BINS];
        let mut acc = Aabb::EMPTY;
        let mut cnt = 0;
        for b in (1..SAH_BINS).rev() {
            acc = acc.union(boxes[b]);
            cnt += counts[b];
            right_area[b] = acc.surface_area();
            right_count[b] = cnt;
        }
        let mut acc = Aabb::EMPTY;
        let mut cnt = 0;
        for b in 0..SAH_BINS - 1 {
            acc = acc.union(boxes[b]);
            cnt += counts[b];
            let rc = right_count[b + 1];
            if cnt == 0 || rc == 0 {
                continue;
            }
            let cost = acc.surface_area() * cnt as f64 + right_area[b + 1] * rc as f64;
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, axis, b + 1));
            }
        }
    }

    if let Some((_, axis, boundary)) = best {
        let scale = SAH_BINS as f64 / ext[axis];
        let min = cb.min[axis];
        let mut i = 0;
        for j in 0..n {
            let b = (((items[j].centroid[axis] - min) * scale) as usize).min(SAH_BINS - 1);
            if b < boundary {
                items.swap(i, j);
                i += 1;
            }
        }
        if i > 0 && i < n {
            return i;
        }
    }
    // Coincident centroids or an unbalanced binning: median split on the widest axis.
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    items.sort_by(|a, b| {
        a.centroid[axis]
            .partial_cmp(&b.centroid[axis])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.face.cmp(&b.face))
    });
    n / 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;

    fn random_ray(rng: &mut ChaCha8Rng, spread: f64) -> Ray {
        let o = Vec3::new(
            rng.random_range(-spread..spread),
            rng.random_range(-spread..spread),
            rng.random_range(-spread..spread),
        );
        let d = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        Ray::new(o, d)
    }

    #[test]
    fn single_triangle_is_one_leaf() {
        let m = TriangleMesh::new(vec![Vec3::ZERO, Vec3::X, Vec3::Y], vec![[0, 1, 2]]).unwrap();
        let bvh = Bvh::build(&m).unwrap();
        assert_eq!(bvh.nodes().len(), 1);
        assert!(bvh.nodes()[0].is_leaf());
        assert_eq!(bvh.leaf_faces(&bvh.nodes()[0]), &[0]);
    }

    #[test]
    fn empty_and_degenerate_meshes_are_rejected() {
        let empty = TriangleMesh::new(vec![], vec![]).unwrap();
        assert!(matches!(Bvh::build(&empty), Err(Error::InvalidInput(_))));
        let flat = TriangleMesh::new(
            vec![Vec3::ZERO, Vec3::X, Vec3::new(2.0, 0.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(Bvh::build(&flat), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn cube_matches_brute_force_on_random_rays() {
        let cube = shapes::cube(1.0);
        let bvh = Bvh::build(&cube).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut hits = 0;
        for _ in 0..1000 {
            let ray = random_ray(&mut rng, 1.5);
            let a = bvh.intersect(&ray);
            let b = brute_force_intersect(&cube, &ray);
            match (a, b) {
                (Some(a), Some(b)) => {
                    hits += 1;
                    assert_eq!(a.face, b.face);
                    assert!((a.t - b.t).abs() < 1e-9);
                }
                (None, None) => {}
                other => panic!("mismatch {other:?}"),
            }
        }
        assert!(hits > 100);
    }

    #[test]
    fn tree_invariants_hold() {
        let m = shapes::torus(0.35, 0.12, 48, 24);
        let bvh = Bvh::build(&m).unwrap();
        let mut seen = vec![0u32; m.faces.len()];
        for node in bvh.nodes() {
            if node.is_leaf() {
                assert!(node.count as usize <= MAX_LEAF_SIZE);
                for &f in bvh.leaf_faces(node) {
                    seen[f as usize] += 1;
                    for v in m.triangle(f as usize) {
                        assert!(node.bounds.contains(v));
                    }
                }
            } else {
                for c in [node.first, node.first + 1] {
                    assert!(node.bounds.contains_box(&bvh.nodes()[c as usize].bounds));
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn sphere_hit_distance_matches_analytic() {
        let s = shapes::uv_sphere(1.0, 50, 50);
        assert!(s.faces.len() >= 4900);
        let bvh = Bvh::build(&s).unwrap();
        let hit = bvh.intersect(&Ray::new(Vec3::new(0.0, 0.0, -2.0), Vec3::Z)).unwrap();
        assert!((hit.t - 1.0).abs() < 0.01, "t = {}", hit.t);
        assert!(bvh.intersect(&Ray::new(Vec3::new(0.0, 0.0, -2.0), -Vec3::Z)).is_none());
    }

    #[test]
    fn ray_inside_cube_hits_far_face() {
        let cube = shapes::cube(1.0);
        let bvh = Bvh::build(&cube).unwrap();
        let o = Vec3::new(0.1, -0.2, 0.3);
        let hit = bvh.intersect(&Ray::new(o, Vec3::X)).unwrap();
        assert!((hit.t - (0.5 - 0.1)).abs() < 1e-12);
        assert!(bvh.any_hit(&Ray::new(o, Vec3::X)));
        assert!(!bvh.any_hit(&Ray::new(Vec3::new(3.0, 0.0, 0.0), Vec3::X)));
    }

    #[test]
    fn any_hit_agrees_with_intersect() {
        let meshes = [
            shapes::cube(1.0),
            shapes::icosphere(3, 0.5),
            shapes::torus(0.3, 0.1, 32, 16),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in &meshes {
            let bvh = Bvh::build(m).unwrap();
            for _ in 0..10_000 {
                let mut ray = random_ray(&mut rng, 0.8);
                ray.t_max = rng.random_range(0.05..2.0);
                assert_eq!(bvh.any_hit(&ray), bvh.intersect(&ray).is_some());
            }
        }
    }

    #[test]
    fn inside_test_matches_sphere_sdf() {
        let s = shapes::icosphere(4, 1.0);
        let bvh = Bvh::build(&s).unwrap();
        assert!(bvh.point_inside(Vec3::ZERO));
        assert!(!bvh.point_inside(Vec3::new(3.0, 0.0, 0.0)));
        // the faceted sphere lies between the inscribed and circumscribed radii
        let inner = (0..s.faces.len())
            .map(|f| {
                let [a, _, _] = s.triangle(f);
                s.face_normal(f).dot(a)
            })
            .fold(f64::INFINITY, f64::min);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        for _ in 0..1000 {
            let p = Vec3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            );
            let r = p.norm();
            if r < inner - 1e-4 {
                assert!(bvh.point_inside(p));
                checked += 1;
            } else if r > 1.0 + 1e-4 {
                assert!(!bvh.point_inside(p));
                checked += 1;
            }
        }
        assert!(checked > 900);
    }

    #[test]
    fn closest_point_matches_scan_on_large_mesh() {
        let s = shapes::icosphere(4, 0.5);
        assert!(s.faces.len() > BRUTE_FORCE_CLOSEST);
        let bvh = Bvh::build(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let fast = bvh.closest_point(p);
            let slow = (0..s.faces.len())
                .map(|f| {
                    let [a, b, c] = s.triangle(f);
                    closest_point_on_triangle(p, a, b, c).0.distance(p)
                })
                .fold(f64::INFINITY, f64::min);
            assert!((fast.distance - slow).abs() < 1e-12);
        }
    }
}
