//! Procedural test meshes. All closed shapes are watertight with outward winding.

use std::collections::HashMap;

use super::{mesh::TriangleMesh, Vec3};

fn build(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> TriangleMesh {
    let mut m = TriangleMesh::new(vertices, faces).expect("procedural mesh indices are valid");
    if signed_volume(&m) < 0.0 {
        m.flip_winding();
        m.recompute_normals();
    }
    m
}

/// Signed enclosed volume (positive for outward winding).
pub fn signed_volume(mesh: &TriangleMesh) -> f64 {
    (0..mesh.faces.len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            a.dot(b.cross(c)) / 6.0
        })
        .sum()
}

pub fn box_mesh(min: Vec3, max: Vec3) -> TriangleMesh {
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        })
        .collect();
    let faces = vec![
        [0, 4, 6],
        [0, 6, 2],
        [1, 3, 7],
        [1, 7, 5],
        [0, 1, 5],
        [0, 5, 4],
        [2, 6, 7],
        [2, 7, 3],
        [0, 2, 3],
        [0, 3, 1],
        [4, 5, 7],
        [4, 7, 6],
    ];
    build(vertices, faces)
}

/// Axis-aligned cube of edge `size` centered at the origin (12 triangles).
pub fn cube(size: f64) -> TriangleMesh {
    let h = Vec3::splat(0.5 * size);
    box_mesh(-h, h)
}

/// Subdivided icosahedron projected onto a sphere.
pub fn icosphere(subdivisions: usize, radius: f64) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let m = ((vertices[a as usize] + vertices[b as usize]) * 0.5).normalized();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v = *v * radius;
    }
    build(vertices, faces)
}

/// Latitude/longitude sphere with single pole vertices.
pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> TriangleMesh {
    assert!(stacks >= 2 && slices >= 3);
    let mut vertices = vec![Vec3::new(0.0, 0.0, radius)];
    for i in 1..stacks {
        let theta = std::f64::consts::PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / slices as f64;
            vertices.push(Vec3::new(
                radius * theta.sin() * phi.cos(),
                radius * theta.sin() * phi.sin(),
                radius * theta.cos(),
            ));
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, -radius));
    let south = (vertices.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;
    let mut faces = Vec::new();
    for j in 0..slices {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    for j in 0..slices {
        faces.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    build(vertices, faces)
}

/// Torus about the z axis with tube radius `minor` around a circle of radius `major`.
pub fn torus(major: f64, minor: f64, segments: usize, sides: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(segments * sides);
    for i in 0..segments {
        let u = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
        for j in 0..sides {
            let v = 2.0 * std::f64::consts::PI * j as f64 / sides as f64;
            let r = major + minor * v.cos();
            vertices.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| ((i % segments) * sides + j % sides) as u32;
    let mut faces = Vec::with_capacity(2 * segments * sides);
    for i in 0..segments {
        for j in 0..sides {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    build(vertices, faces)
}

/// Open `n × n` quad grid in the z = 0 plane spanning `[-size/2, size/2]²`, facing +z.
pub fn grid_plane(n: usize, size: f64) -> TriangleMesh {
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vec3::new(
                size * (i as f64 / n as f64 - 0.5),
                size * (j as f64 / n as f64 - 0.5),
                0.0,
            ));
        }
    }
    let idx = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    let mut faces = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh::new(vertices, faces).expect("grid indices are valid")
}

/// Two boxes facing each other across a narrow slot: a compact concave scene.
pub fn two_box_scene() -> TriangleMesh {
    let a = box_mesh(Vec3::new(-0.5, -0.35, -0.3), Vec3::new(-0.04, 0.35, 0.3));
    let b = box_mesh(Vec3::new(0.04, -0.35, -0.3), Vec3::new(0.5, 0.35, 0.3));
    a.merged(&b)
}

/// Smooth star-shaped blob with a position-dependent albedo; a stand-in for a scanned object.
pub fn blob(subdivisions: usize) -> TriangleMesh {
    let base = icosphere(subdivisions, 1.0);
    let radius = |d: Vec3| {
        0.4 * (1.0 + 0.12 * (2.5 * d.x + 1.0).sin() * (2.0 * d.y).cos() + 0.18 * d.z * d.z)
    };
    let vertices: Vec<Vec3> = base.vertices.iter().map(|&d| d * radius(d)).collect();
    let albedo = base
        .vertices
        .iter()
        .map(|d| {
            [
                0.55 + 0.35 * d.x,
                0.5 + 0.3 * d.y * d.z,
                0.45 - 0.3 * d.z,
            ]
        })
        .collect();
    build(vertices, base.faces)
        .with_albedo(albedo)
        .expect("albedo length matches")
}

/// Sphere of radius `r` centered at height `h` above a `size × size` ground grid at z = 0.
/// Returns the merged scene and the number of ground faces (ground faces come first).
pub fn sphere_over_plane(r: f64, h: f64, size: f64, grid: usize) -> (TriangleMesh, usize) {
    let ground = grid_plane(grid, size);
    let sphere = icosphere(3, r).transformed(|v| v + Vec3::new(0.0, 0.0, h), |n| n);
    let ground_faces = ground.faces.len();
    (ground.merged(&sphere), ground_faces)
}
