use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::Vec3;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::splat(f64::INFINITY),
        max: Vec3::splat(f64::NEG_INFINITY),
    };

    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        points.into_iter().fold(Aabb::EMPTY, |b, p| b.grow(*p))
    }

    #[inline]
    pub fn grow(self, p: Vec3) -> Self {
        Aabb {
            min: self.min.min(p),
            max: self.max.max(p),
        }
    }

    #[inline]
    pub fn union(self, o: Aabb) -> Self {
        Aabb {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    #[inline]
    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    #[inline]
    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn max_edge(&self) -> f64 {
        self.extent().max_elem()
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn surface_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    /// Scale the box about its center so each half-extent grows by `fraction`.
    pub fn inflated(&self, fraction: f64) -> Aabb {
        let c = self.center();
        let h = self.extent() * (0.5 * (1.0 + fraction));
        Aabb::new(c - h, c + h)
    }

    pub fn padded(&self, pad: f64) -> Aabb {
        Aabb::new(self.min - Vec3::splat(pad), self.max + Vec3::splat(pad))
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.y >= self.min.y
            && p.z >= self.min.z
            && p.x <= self.max.x
            && p.y <= self.max.y
            && p.z <= self.max.z
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    /// Squared distance from `p` to the box (zero inside).
    #[inline]
    pub fn distance_squared(&self, p: Vec3) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        let dz = (self.min.z - p.z).max(0.0).max(p.z - self.max.z);
        dx * dx + dy * dy + dz * dz
    }
}

/// Triangle mesh with per-vertex normals and optional per-vertex albedo in `[0,1]³`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub vertex_normals: Vec<Vec3>,
    pub vertex_albedo: Option<Vec<[f64; 3]>>,
}

impl TriangleMesh {
    /// Build a mesh, checking face indices and computing area-weighted vertex normals.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mut mesh = TriangleMesh {
            vertices,
            faces,
            vertex_normals: Vec::new(),
            vertex_albedo: None,
        };
        mesh.check_indices()?;
        mesh.recompute_normals();
        Ok(mesh)
    }

    pub fn with_albedo(mut self, albedo: Vec<[f64; 3]>) -> Result<Self> {
        if albedo.len() != self.vertices.len() {
            return Err(Error::InvalidInput(format!(
                "albedo has {} entries for {} vertices",
                albedo.len(),
                self.vertices.len()
            )));
        }
        self.vertex_albedo = Some(albedo);
        Ok(self)
    }

    pub fn with_uniform_albedo(self, rgb: [f64; 3]) -> Self {
        let n = self.vertices.len();
        TriangleMesh {
            vertex_albedo: Some(vec![rgb; n]),
            ..self
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    fn check_indices(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i as usize >= n) {
                return Err(Error::InvalidInput(format!(
                    "face {fi} references vertex out of range ({f:?}, {n} vertices)"
                )));
            }
        }
        if let Some(v) = self.vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("vertex {v} is not finite")));
        }
        Ok(())
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unnormalized face normal (twice the area, right-hand winding).
    #[inline]
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(c - a)
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        self.face_cross(face).normalized()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn recompute_normals(&mut self) {
        let mut normals = vec![Vec3::ZERO; self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let n = self.face_cross(fi);
            for &i in f {
                normals[i as usize] += n;
            }
        }
        for n in &mut normals {
            *n = n.normalized();
        }
        self.vertex_normals = normals;
    }

    /// A face is degenerate when its area is negligible relative to its longest edge.
    pub fn is_degenerate(&self, face: usize) -> bool {
        let [a, b, c] = self.triangle(face);
        let longest = (b - a)
            .norm_squared()
            .max((c - b).norm_squared())
            .max((a - c).norm_squared());
        let cross = (b - a).cross(c - a).norm();
        longest == 0.0 || cross <= 1e-12 * longest
    }

    pub fn degenerate_faces(&self) -> Vec<usize> {
        (0..self.faces.len()).filter(|&f| self.is_degenerate(f)).collect()
    }

    pub fn check_non_degenerate(&self) -> Result<()> {
        match self.degenerate_faces().first() {
            Some(f) => Err(Error::InvalidInput(format!("face {f} has zero area"))),
            None => Ok(()),
        }
    }

    /// Remove zero-area faces; returns how many were dropped.
    pub fn drop_degenerate(&mut self) -> usize {
        let before = self.faces.len();
        let keep: Vec<[u32; 3]> = (0..before)
            .filter(|&f| !self.is_degenerate(f))
            .map(|f| self.faces[f])
            .collect();
        self.faces = keep;
        before - self.faces.len()
    }

    /// Number of undirected edges not shared by exactly two faces.
    pub fn open_edge_count(&self) -> usize {
        let mut edges: HashMap<(u32, u32), u32> = HashMap::with_capacity(self.faces.len() * 3);
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges.values().filter(|&&c| c != 2).count()
    }

    pub fn is_watertight(&self) -> bool {
        !self.faces.is_empty() && self.open_edge_count() == 0
    }

    pub fn check_watertight(&self) -> Result<()> {
        let open_edges = if self.faces.is_empty() {
            1
        } else {
            self.open_edge_count()
        };
        if open_edges == 0 {
            Ok(())
        } else {
            Err(Error::NotWatertight { open_edges })
        }
    }

    /// Translate to the bounding-box center and scale so the longest box edge is 1.
    /// Returns the normalized mesh together with `(center, scale)` such that
    /// `normalized = (original - center) * scale`.
    pub fn normalized(&self) -> (TriangleMesh, Vec3, f64) {
        let b = self.bounds();
        let center = b.center();
        let edge = b.max_edge();
        let scale = if edge > 0.0 { 1.0 / edge } else { 1.0 };
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = (*v - center) * scale;
        }
        (out, center, scale)
    }

    pub fn transformed(&self, f: impl Fn(Vec3) -> Vec3, normal_f: impl Fn(Vec3) -> Vec3) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = f(*v);
        }
        for n in &mut out.vertex_normals {
            *n = normal_f(*n).normalized();
        }
        out
    }

    /// Reverse the winding of every face.
    pub fn flip_winding(&mut self) {
        for f in &mut self.faces {
            f.swap(1, 2);
        }
        for n in &mut self.vertex_normals {
            *n = -*n;
        }
    }

    /// Concatenate two meshes.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| f.map(|i| i + offset)));
        let mut normals = self.vertex_normals.clone();
        normals.extend_from_slice(&other.vertex_normals);
        let vertex_albedo = match (&self.vertex_albedo, &other.vertex_albedo) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        TriangleMesh {
            vertices,
            faces,
            vertex_normals: normals,
            vertex_albedo,
        }
    }

    /// Component label of every face, where faces sharing a vertex are connected.
    /// Labels are dense and ordered by each component's first face.
    pub fn face_components(&self) -> Vec<usize> {
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        for f in &self.faces {
            let a = find(&mut parent, f[0] as usize);
            for &v in &f[1..] {
                let b = find(&mut parent, v as usize);
                if a != b {
                    parent[b] = a;
                }
            }
        }
        let mut label = HashMap::new();
        self.faces
            .iter()
            .map(|f| {
                let root = find(&mut parent, f[0] as usize);
                let next = label.len();
                *label.entry(root).or_insert(next)
            })
            .collect()
    }

    /// Drop every connected component whose area is below `min_fraction` of the largest
    /// component's area, along with the vertices only they used.
    pub fn without_small_components(&self, min_fraction: f64) -> TriangleMesh {
        let labels = self.face_components();
        let count = labels.iter().max().map_or(0, |&m| m + 1);
        let mut area = vec![0.0; count];
        for (f, &l) in labels.iter().enumerate() {
            area[l] += self.face_area(f);
        }
        let largest = area.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<bool> = area.iter().map(|&a| a >= min_fraction * largest).collect();

        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut out = TriangleMesh {
            vertices: Vec::new(),
            faces: Vec::new(),
            vertex_normals: Vec::new(),
            vertex_albedo: self.vertex_albedo.as_ref().map(|_| Vec::new()),
        };
        for (f, face) in self.faces.iter().enumerate() {
            if !keep[labels[f]] {
                continue;
            }
            let mapped = face.map(|v| {
                let v = v as usize;
                if remap[v] == u32::MAX {
                    remap[v] = out.vertices.len() as u32;
                    out.vertices.push(self.vertices[v]);
                    out.vertex_normals.push(self.vertex_normals[v]);
                    if let (Some(dst), Some(src)) = (&mut out.vertex_albedo, &self.vertex_albedo) {
                        dst.push(src[v]);
                    }
                }
                remap[v]
            });
            out.faces.push(mapped);
        }
        out
    }

    /// Barycentric interpolation of the vertex normals on `face`, renormalized.
    pub fn interpolate_normal(&self, face: usize, bary: (f64, f64)) -> Vec3 {
        let [a, b, c] = self.faces[face];
        let (u, v) = bary;
        let n = self.vertex_normals[a as usize] * (1.0 - u - v)
            + self.vertex_normals[b as usize] * u
            + self.vertex_normals[c as usize] * v;
        let n = n.normalized();
        if n.norm_squared() > 0.0 {
            n
        } else {
            self.face_normal(face)
        }
    }

    pub fn interpolate_albedo(&self, face: usize, bary: (f64, f64)) -> Option<[f64; 3]> {
        let albedo = self.vertex_albedo.as_ref()?;
        let [a, b, c] = self.faces[face];
        let (u, v) = bary;
        let w = [1.0 - u - v, u, v];
        let mut out = [0.0; 3];
        for (wi, vi) in w.iter().zip([a, b, c]) {
            for ch in 0..3 {
                out[ch] += wi * albedo[vi as usize][ch];
            }
        }
        Some(out)
    }

    /// SHA-256 over little-endian vertex coordinates, face indices and albedo.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.vertices.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v.to_array() {
                h.update(c.to_le_bytes());
            }
        }
        h.update((self.faces.len() as u64).to_le_bytes());
        for f in &self.faces {
            for i in f {
                h.update(i.to_le_bytes());
            }
        }
        if let Some(albedo) = &self.vertex_albedo {
            for a in albedo {
                for c in a {
                    h.update(c.to_le_bytes());
                }
            }
        }
        h.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;

    #[test]
    fn out_of_range_face_is_rejected() {
        let err = TriangleMesh::new(vec![Vec3::ZERO; 2], vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn cube_is_watertight_and_open_quad_is_not() {
        assert!(shapes::cube(1.0).is_watertight());
        let quad = shapes::grid_plane(2, 1.0);
        assert!(!quad.is_watertight());
        assert!(matches!(
            quad.check_watertight(),
            Err(Error::NotWatertight { .. })
        ));
    }

    #[test]
    fn normalization_sets_unit_max_edge() {
        let m = shapes::cube(3.0).transformed(|v| v + Vec3::new(5.0, -1.0, 2.0), |n| n);
        let (n, _, scale) = m.normalized();
        let b = n.bounds();
        assert!((b.max_edge() - 1.0).abs() < 1e-12);
        assert!(b.center().norm() < 1e-12);
        assert!((scale - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_faces_are_found_and_dropped() {
        let mut m = TriangleMesh::new(
            vec![
                Vec3::ZERO,
                Vec3::X,
                Vec3::Y,
                Vec3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap();
        assert_eq!(m.degenerate_faces(), vec![1]);
        assert!(m.check_non_degenerate().is_err());
        assert_eq!(m.drop_degenerate(), 1);
        assert_eq!(m.faces.len(), 1);
    }

    #[test]
    fn vertex_normals_point_outward_on_sphere() {
        let s = shapes::icosphere(2, 1.0);
        for (v, n) in s.vertices.iter().zip(&s.vertex_normals) {
            assert!(v.normalized().dot(*n) > 0.98);
        }
    }

    #[test]
    fn small_components_are_dropped_and_survivors_stay_closed() {
        let big = shapes::icosphere(2, 0.5);
        let speck = shapes::cube(0.05).transformed(|v| v + Vec3::new(2.0, 0.0, 0.0), |n| n);
        let both = big.merged(&speck).with_uniform_albedo([0.2, 0.4, 0.6]);
        let labels = both.face_components();
        assert_eq!(labels.iter().max(), Some(&1));
        assert!(labels[..big.faces.len()].iter().all(|&l| l == 0));

        let kept = both.without_small_components(0.05);
        assert_eq!(kept.faces.len(), big.faces.len());
        assert_eq!(kept.vertices.len(), big.vertices.len());
        assert_eq!(kept.vertex_albedo.as_ref().unwrap().len(), kept.vertices.len());
        assert!(kept.is_watertight());
        assert_eq!(both.without_small_components(0.0).faces.len(), both.faces.len());
    }
}
