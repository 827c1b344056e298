//! Precomputed radiance transfer with real spherical harmonics up to l = 2:
//! transfer vectors from discretized visibility, environment lighting and
//! self-shadowed diffuse shading rendered by primary-ray casting.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirsphere::DirectionSet;
use crate::geom::{Bvh, Camera, TriangleMesh, Vec3};
use crate::image::{load_image, Image};
use crate::{Error, Result};

/// Coefficients for bands l = 0, 1, 2.
pub const SH_COUNT: usize = 9;

pub type Sh = [f64; SH_COUNT];

/// Real SH in band order (0,0), (1,−1), (1,0), (1,1), (2,−2), (2,−1), (2,0), (2,1), (2,2).
pub fn sh_basis(w: Vec3) -> Sh {
    let (x, y, z) = (w.x, w.y, w.z);
    let c0 = 0.5 / PI.sqrt();
    let c1 = (3.0 / (4.0 * PI)).sqrt();
    let c2 = 0.5 * (15.0 / PI).sqrt();
    let c20 = 0.25 * (5.0 / PI).sqrt();
    let c22 = 0.25 * (15.0 / PI).sqrt();
    [
        c0,
        c1 * y,
        c1 * z,
        c1 * x,
        c2 * x * y,
        c2 * y * z,
        c20 * (3.0 * z * z - 1.0),
        c2 * x * z,
        c22 * (x * x - y * y),
    ]
}

/// Uniform-quadrature projection `(4π/n)·Σ f(ω_j)·Y(ω_j)` over the direction set.
pub fn project_to_sh(f: &[f64], dirs: &DirectionSet) -> Sh {
    debug_assert_eq!(f.len(), dirs.len());
    let mut c = [0.0; SH_COUNT];
    for (&v, &w) in f.iter().zip(dirs.directions()) {
        if v == 0.0 {
            continue;
        }
        let y = sh_basis(w);
        for k in 0..SH_COUNT {
            c[k] += v * y[k];
        }
    }
    let scale = 4.0 * PI / dirs.len() as f64;
    c.map(|v| v * scale)
}

/// SH projection of `V(ω)·max(n·ω, 0)`; albedo/π is applied at shading time.
pub fn transfer_vector(visibility: &[f64], normal: Vec3, dirs: &DirectionSet) -> Sh {
    let g: Vec<f64> = visibility
        .iter()
        .zip(dirs.directions())
        .map(|(&v, &w)| v * normal.dot(w).max(0.0))
        .collect();
    project_to_sh(&g, dirs)
}

/// Three-channel SH radiance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentLight {
    pub sh: [Sh; 3],
}

impl EnvironmentLight {
    /// Constant radiance `l0` per channel.
    pub fn constant(l0: [f64; 3]) -> Self {
        let c = 2.0 * PI.sqrt();
        let mut sh = [[0.0; SH_COUNT]; 3];
        for ch in 0..3 {
            sh[ch][0] = c * l0[ch];
        }
        EnvironmentLight { sh }
    }

    pub fn scaled(&self, s: f64) -> Self {
        EnvironmentLight {
            sh: self.sh.map(|c| c.map(|v| v * s)),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sh.iter().flatten().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("light coefficients".into()))
        }
    }
}

/// Projects an equirectangular radiance map (rows span θ ∈ [0, π] from +z down,
/// columns span φ ∈ [0, 2π)), pixel centers at half-integer offsets.
pub fn project_env_map(map: &Image) -> Result<EnvironmentLight> {
    if map.width < 2 || map.height < 2 {
        return Err(Error::InvalidInput("environment map must be at least 2×2".into()));
    }
    let (dt, dp) = (PI / map.height as f64, 2.0 * PI / map.width as f64);
    let mut sh = [[0.0; SH_COUNT]; 3];
    for row in 0..map.height {
        let theta = (row as f64 + 0.5) * dt;
        let weight = theta.sin() * dt * dp;
        for col in 0..map.width {
            let phi = (col as f64 + 0.5) * dp;
            let w = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            let y = sh_basis(w);
            let px = map.pixel(col, row);
            for ch in 0..3 {
                let l = if map.channels == 1 { px[0] } else { px[ch] };
                for k in 0..SH_COUNT {
                    sh[ch][k] += l * y[k] * weight;
                }
            }
        }
    }
    let light = EnvironmentLight { sh };
    light.validate()?;
    Ok(light)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LightSpec {
    sh: Option<Vec<Vec<f64>>>,
    envmap: Option<String>,
}

/// Parses `{"sh": [[9 floats] × 3]}` or `{"envmap": "<path to PFM>"}`; relative
/// envmap paths resolve against `base_dir`.
pub fn parse_light(json: &str, base_dir: &Path) -> Result<EnvironmentLight> {
    let spec: LightSpec = serde_json::from_str(json).map_err(|e| Error::Config(format!("light spec: {e}")))?;
    match (spec.sh, spec.envmap) {
        (Some(rows), None) => {
            if rows.len() != 3 || rows.iter().any(|r| r.len() != SH_COUNT) {
                return Err(Error::Config("light sh must be 3 rows of 9 coefficients".into()));
            }
            let mut sh = [[0.0; SH_COUNT]; 3];
            for (ch, r) in rows.iter().enumerate() {
                sh[ch].copy_from_slice(r);
            }
            let light = EnvironmentLight { sh };
            light.validate()?;
            Ok(light)
        }
        (None, Some(path)) => project_env_map(&load_image(base_dir.join(path))?),
        _ => Err(Error::Config("light spec needs exactly one of \"sh\" or \"envmap\"".into())),
    }
}

pub fn load_light(path: impl AsRef<Path>) -> Result<EnvironmentLight> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_light(&text, path.parent().unwrap_or(Path::new(".")))
}

/// `Σ_k t_k·L_k` per channel, before any clamping.
pub fn radiance_dot(t: &Sh, light: &EnvironmentLight) -> [f64; 3] {
    light.sh.map(|l| t.iter().zip(&l).map(|(a, b)| a * b).sum())
}

/// Unclamped `(albedo/π)·Σ_k t_k·L_k`.
pub fn shade_unclamped(t: &Sh, light: &EnvironmentLight, albedo: [f64; 3]) -> [f64; 3] {
    let r = radiance_dot(t, light);
    [0, 1, 2].map(|c| albedo[c] / PI * r[c])
}

pub fn shade_vertex(t: &Sh, light: &EnvironmentLight, albedo: [f64; 3]) -> [f64; 3] {
    shade_unclamped(t, light, albedo).map(|v| v.max(0.0))
}

pub fn irradiance(t: &Sh, light: &EnvironmentLight) -> [f64; 3] {
    radiance_dot(t, light).map(|v| v.max(0.0))
}

/// Per-vertex transfer and albedo attached to a mesh.
#[derive(Clone, Debug)]
pub struct PrtMesh {
    pub mesh: TriangleMesh,
    pub transfer: Vec<Sh>,
    pub albedo: Vec<[f64; 3]>,
}

impl PrtMesh {
    pub fn new(mesh: TriangleMesh, transfer: Vec<Sh>, albedo: Vec<[f64; 3]>) -> Result<Self> {
        let n = mesh.vertices.len();
        if transfer.len() != n {
            return Err(Error::Config(format!("{} transfer vectors for {n} vertices", transfer.len())));
        }
        if albedo.len() != n {
            return Err(Error::Config(format!("{} albedo values for {n} vertices", albedo.len())));
        }
        Ok(PrtMesh { mesh, transfer, albedo })
    }
}

/// What each rendered pixel shows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderMode {
    Shaded,
    Irradiance,
}

/// Casts one primary ray per pixel, interpolates transfer and albedo barycentrically and
/// shades. Returns the RGB image and an alpha mask (1 where the ray hit).
pub fn render_image(prt: &PrtMesh, bvh: &Bvh, camera: &Camera, light: &EnvironmentLight, mode: RenderMode) -> (Image, Image) {
    let (w, h) = (camera.width, camera.height);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..h)
        .into_par_iter()
        .map(|j| {
            let mut rgb = vec![0.0; w * 3];
            let mut alpha = vec![0.0; w];
            for i in 0..w {
                let Some(hit) = bvh.intersect(&camera.pixel_ray(i, j)) else {
                    continue;
                };
                let [a, b, c] = prt.mesh.faces[hit.face].map(|v| v as usize);
                let (u, v) = hit.barycentric;
                let wa = 1.0 - u - v;
                let mut t = [0.0; SH_COUNT];
                for k in 0..SH_COUNT {
                    t[k] = wa * prt.transfer[a][k] + u * prt.transfer[b][k] + v * prt.transfer[c][k];
                }
                let out = match mode {
                    RenderMode::Shaded => {
                        let alb = [0, 1, 2].map(|ch| wa * prt.albedo[a][ch] + u * prt.albedo[b][ch] + v * prt.albedo[c][ch]);
                        shade_vertex(&t, light, alb)
                    }
                    RenderMode::Irradiance => irradiance(&t, light),
                };
                rgb[i * 3..i * 3 + 3].copy_from_slice(&out);
                alpha[i] = 1.0;
            }
            (rgb, alpha)
        })
        .collect();
    let mut rgb = Vec::with_capacity(w * h * 3);
    let mut alpha = Vec::with_capacity(w * h);
    for (r, a) in rows {
        rgb.extend(r);
        alpha.extend(a);
    }
    (
        Image::from_data(w, h, 3, rgb).expect("row sizes match"),
        Image::from_data(w, h, 1, alpha).expect("row sizes match"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirsphere::random_unit;
    use crate::geom::{mat3_mul_vec, rotation_matrix, shapes, Camera};
    use crate::oracle::trace_visibility;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn axial_values() {
        let y = sh_basis(Vec3::Z);
        assert!((y[0] - 0.282095).abs() < 1e-6);
        assert!((y[2] - 0.488603).abs() < 1e-6);
        assert!((y[6] - 0.630783).abs() < 1e-6);
        for k in [1, 3, 4, 5, 7, 8] {
            assert_eq!(y[k], 0.0);
        }
        // table constants
        let d = Vec3::new(1.0, 1.0, 1.0).normalized();
        let y = sh_basis(d);
        assert!((y[4] - 1.092548 * d.x * d.y).abs() < 1e-6);
        assert!((y[8] - 0.546274 * (d.x * d.x - d.y * d.y)).abs() < 1e-6);
        assert!((y[6] - 0.315392 * (3.0 * d.z * d.z - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let w = random_unit(&mut rng);
            let (a, b) = (sh_basis(w), sh_basis(-w));
            for k in 0..SH_COUNT {
                let l = match k {
                    0 => 0,
                    1..=3 => 1,
                    _ => 2,
                };
                assert_eq!(b[k], if l % 2 == 0 { a[k] } else { -a[k] });
            }
        }
    }

    #[test]
    fn monte_carlo_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mut gram = [[0.0; SH_COUNT]; SH_COUNT];
        for _ in 0..n {
            let y = sh_basis(random_unit(&mut rng));
            for a in 0..SH_COUNT {
                for b in 0..SH_COUNT {
                    gram[a][b] += y[a] * y[b];
                }
            }
        }
        for a in 0..SH_COUNT {
            for b in 0..SH_COUNT {
                let v = 4.0 * PI * gram[a][b] / n as f64;
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 0.03, "({a},{b}) = {v}");
            }
        }
    }

    #[test]
    fn projections_on_the_lattice() {
        let d = DirectionSet::fibonacci(64).unwrap();
        let c = project_to_sh(&vec![1.0; 64], &d);
        assert!((c[0] - 2.0 * PI.sqrt()).abs() / (2.0 * PI.sqrt()) < 0.02);
        assert!(c[1..].iter().all(|v| v.abs() < 0.05));
        let y10: Vec<f64> = d.directions().iter().map(|&w| sh_basis(w)[2]).collect();
        let c = project_to_sh(&y10, &d);
        assert!((c[2] - 1.0).abs() < 0.03);
        assert!(c.iter().enumerate().all(|(k, v)| k == 2 || v.abs() < 0.03));
        assert_eq!(project_to_sh(&vec![0.0; 64], &d), [0.0; SH_COUNT]);
    }

    #[test]
    fn unoccluded_transfer_integrates_the_cosine() {
        let d = DirectionSet::fibonacci(64).unwrap();
        let light = EnvironmentLight::constant([1.0, 2.0, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = random_unit(&mut rng);
            let t = transfer_vector(&vec![1.0; 64], n, &d);
            let r = radiance_dot(&t, &light);
            for (ch, l0) in [1.0, 2.0, 0.5].iter().enumerate() {
                assert!((r[ch] - PI * l0).abs() / (PI * l0) < 0.05, "{} vs {}", r[ch], PI * l0);
            }
            let s = shade_unclamped(&t, &light, [0.5, 0.5, 0.5]);
            assert!(s[1] <= 0.5 * 2.0 * 1.05);
        }
        assert_eq!(transfer_vector(&vec![0.0; 64], Vec3::Z, &d), [0.0; SH_COUNT]);
    }

    #[test]
    fn hemispherical_blocker_changes_nothing_for_up_normal() {
        let d = DirectionSet::fibonacci(64).unwrap();
        let upper: Vec<f64> = d.directions().iter().map(|w| if w.z > 0.0 { 1.0 } else { 0.0 }).collect();
        assert_eq!(transfer_vector(&upper, Vec3::Z, &d), transfer_vector(&vec![1.0; 64], Vec3::Z, &d));
    }

    #[test]
    fn env_map_projection() {
        let c = project_env_map(&Image::filled(64, 32, 3, 1.0)).unwrap();
        for ch in 0..3 {
            assert!((c.sh[ch][0] - 2.0 * PI.sqrt()).abs() / (2.0 * PI.sqrt()) < 0.01);
            assert!(c.sh[ch][1..].iter().all(|v| v.abs() < 0.02));
        }
        let (w, h) = (128, 64);
        let mut img = Image::new(w, h, 3);
        for row in 0..h {
            let theta = (row as f64 + 0.5) * PI / h as f64;
            for col in 0..w {
                for ch in 0..3 {
                    img.set(col, row, ch, theta.cos().max(0.0));
                }
            }
        }
        let c = project_env_map(&img).unwrap();
        // ∫ max(cosθ,0)·Y00 = √π/2, ∫ max(cosθ,0)·Y10 = √(π/3)
        assert!((c.sh[0][0] - PI.sqrt() / 2.0).abs() / (PI.sqrt() / 2.0) < 0.02);
        assert!((c.sh[0][2] - (PI / 3.0).sqrt()).abs() / (PI / 3.0).sqrt() < 0.02);
        assert_eq!(project_env_map(&Image::new(8, 4, 3)).unwrap().sh, [[0.0; SH_COUNT]; 3]);
    }

    #[test]
    fn shading_is_linear_and_clamped() {
        let d = DirectionSet::fibonacci(64).unwrap();
        let t = transfer_vector(&vec![1.0; 64], Vec3::new(0.3, -0.2, 0.9).normalized(), &d);
        let light = EnvironmentLight {
            sh: [[0.7, 0.1, 0.9, -0.3, 0.2, 0.0, -0.4, 0.1, 0.05]; 3],
        };
        let a = shade_unclamped(&t, &light, [0.2, 0.5, 0.9]);
        let b = shade_unclamped(&t, &light.scaled(2.0), [0.2, 0.5, 0.9]);
        let c = shade_unclamped(&t, &light, [0.4, 1.0, 1.8]);
        for ch in 0..3 {
            assert_eq!(b[ch], 2.0 * a[ch]);
            assert_eq!(c[ch], 2.0 * a[ch]);
        }
        assert_eq!(shade_vertex(&[0.0; SH_COUNT], &light, [1.0; 3]), [0.0; 3]);
        let neg = light.scaled(-1.0);
        assert_eq!(shade_vertex(&t, &neg, [1.0; 3]), [0.0; 3]);
        let irr = irradiance(&t, &light);
        let sh = shade_vertex(&t, &light, [PI; 3]);
        for ch in 0..3 {
            assert!((irr[ch] - sh[ch]).abs() < 1e-12);
        }
    }

    #[test]
    fn light_json() {
        let json = r#"{"sh": [[1,0,0,0,0,0,0,0,0],[2,0,0,0,0,0,0,0,0],[3,0,0,0,0,0,0,0,0]]}"#;
        let l = parse_light(json, Path::new(".")).unwrap();
        assert_eq!(l.sh[2][0], 3.0);
        assert!(parse_light("{}", Path::new(".")).is_err());
        assert!(parse_light(r#"{"sh": [[1]]}"#, Path::new(".")).is_err());
    }

    fn prt_from_oracle(mesh: &TriangleMesh, bvh: &Bvh, dirs: &DirectionSet, albedo: [f64; 3]) -> PrtMesh {
        let transfer = mesh
            .vertices
            .iter()
            .zip(&mesh.vertex_normals)
            .map(|(&p, &n)| {
                let v = trace_visibility(bvh, p + n * 1e-4, dirs).to_values();
                transfer_vector(&v, n, dirs)
            })
            .collect();
        PrtMesh::new(mesh.clone(), transfer, vec![albedo; mesh.vertices.len()]).unwrap()
    }

    #[test]
    fn empty_view_and_flat_quad() {
        let dirs = DirectionSet::fibonacci(64).unwrap();
        let quad = shapes::grid_plane(4, 1.0);
        let bvh = Bvh::build(&quad).unwrap();
        let prt = prt_from_oracle(&quad, &bvh, &dirs, [0.6, 0.6, 0.6]);
        let light = EnvironmentLight::constant([1.0; 3]);
        let away = Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::new(0.0, 0.0, 6.0), Vec3::Y, 0.5, 16, 16).unwrap();
        let (img, alpha) = render_image(&prt, &bvh, &away, &light, RenderMode::Shaded);
        assert!(img.data.iter().all(|&v| v == 0.0) && alpha.data.iter().all(|&v| v == 0.0));
        let down = Camera::look_at(Vec3::new(0.0, 0.0, 2.0), Vec3::ZERO, Vec3::Y, 0.4, 24, 24).unwrap();
        let (img, alpha) = render_image(&prt, &bvh, &down, &light, RenderMode::Shaded);
        let covered = alpha.data.iter().filter(|&&a| a == 1.0).count();
        assert!(covered > 24 * 24 / 2);
        for (k, &a) in alpha.data.iter().enumerate() {
            if a == 1.0 {
                for ch in 0..3 {
                    // open plane: the upper hemisphere is free, n·ω clamps the lower one
                    assert!((img.data[k * 3 + ch] - 0.6).abs() < 0.6 * 0.05);
                }
            }
        }
    }

    #[test]
    fn contact_shadow_matches_brute_force_reference() {
        let dirs = DirectionSet::fibonacci(64).unwrap();
        let (scene, ground_faces) = shapes::sphere_over_plane(0.25, 0.35, 2.0, 24);
        let bvh = Bvh::build(&scene).unwrap();
        let prt = prt_from_oracle(&scene, &bvh, &dirs, [0.8; 3]);
        let mut light = EnvironmentLight::constant([0.3; 3]);
        for ch in 0..3 {
            light.sh[ch][2] = 1.2;
        }
        let cam = Camera::look_at(Vec3::new(0.0, -2.2, 2.4), Vec3::ZERO, Vec3::Z, 0.7, 48, 48).unwrap();
        let (img, _) = render_image(&prt, &bvh, &cam, &light, RenderMode::Shaded);
        // reference: brute-force visibility traced at each hit point
        let mut under = (0.0, 0, 0.0);
        let mut open = (0.0, 0, 0.0);
        for j in 0..48 {
            for i in 0..48 {
                let Some(hit) = bvh.intersect(&cam.pixel_ray(i, j)) else { continue };
                if hit.face >= ground_faces {
                    continue;
                }
                let p = cam.pixel_ray(i, j).at(hit.t);
                let r = (p.x * p.x + p.y * p.y).sqrt();
                let v: Vec<f64> = dirs
                    .directions()
                    .iter()
                    .map(|&w| {
                        let ray = crate::geom::Ray::new(p + Vec3::Z * 1e-4, w).with_range(1e-4, f64::INFINITY);
                        if crate::geom::brute_force_intersect(&scene, &ray).is_some() { 0.0 } else { 1.0 }
                    })
                    .collect();
                let reference = shade_vertex(&transfer_vector(&v, Vec3::Z, &dirs), &light, [0.8; 3])[0];
                let px = img.get(i, j, 0);
                if r < 0.1 {
                    under = (under.0 + px, under.1 + 1, under.2 + reference);
                } else if r > 0.8 {
                    open = (open.0 + px, open.1 + 1, open.2 + reference);
                }
            }
        }
        let (mu, mo) = (under.0 / under.1 as f64, open.0 / open.1 as f64);
        let (ru, ro) = (under.2 / under.1 as f64, open.2 / open.1 as f64);
        assert!(under.1 > 0 && open.1 > 0);
        assert!(mu < 0.8 * mo, "under {mu} open {mo}");
        assert!(ru < 0.8 * ro);
        assert!((mu - ru).abs() / ru < 0.15);
    }

    #[test]
    fn rotating_scene_and_light_together() {
        let dirs = DirectionSet::fibonacci(64).unwrap();
        let blob = shapes::blob(3);
        let bvh = Bvh::build(&blob).unwrap();
        let prt = prt_from_oracle(&blob, &bvh, &dirs, [0.7; 3]);
        let mut light = EnvironmentLight::constant([0.5; 3]);
        for ch in 0..3 {
            light.sh[ch][2] = 0.8;
        }
        let cam = Camera::look_at(Vec3::new(0.0, -2.0, 0.0), Vec3::ZERO, Vec3::Z, 0.8, 40, 40).unwrap();
        let (a, _) = render_image(&prt, &bvh, &cam, &light, RenderMode::Shaded);
        // rotate about the view axis: scene, camera up and light all turn together
        let r = rotation_matrix(Vec3::Y, 0.9);
        let rb = blob.transformed(|v| mat3_mul_vec(&r, v), |n| mat3_mul_vec(&r, n));
        let rbvh = Bvh::build(&rb).unwrap();
        let rprt = prt_from_oracle(&rb, &rbvh, &dirs, [0.7; 3]);
        // the z-axis light rotates into this SH: Y1 terms map (y,z,x) components
        let axis = mat3_mul_vec(&r, Vec3::Z);
        let c1 = 0.8;
        let mut rl = EnvironmentLight::constant([0.5; 3]);
        for ch in 0..3 {
            rl.sh[ch][1] = c1 * axis.y;
            rl.sh[ch][2] = c1 * axis.z;
            rl.sh[ch][3] = c1 * axis.x;
        }
        let rcam = Camera::look_at(mat3_mul_vec(&r, Vec3::new(0.0, -2.0, 0.0)), Vec3::ZERO, mat3_mul_vec(&r, Vec3::Z), 0.8, 40, 40).unwrap();
        let (b, _) = render_image(&rprt, &rbvh, &rcam, &rl, RenderMode::Shaded);
        assert!(a.mean_abs_diff(&b).unwrap() < 0.02);
    }
}
