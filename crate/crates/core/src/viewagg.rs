//! Visibility-guided aggregation of per-view image features.
//!
//! A point's feature from view `i` is weighted by `w = min(−ln(1−V_i), 100)` where `V_i`
//! is the point's interpolated visibility toward that camera, so occluded views fade out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dirsphere::{interpolate_visibility, DirectionSet};
use crate::geom::{Bvh, Camera, TriangleMesh, Vec3};
use crate::image::{load_image, save_image, Image};
use crate::{Error, Result};

/// Upper clamp on a single view's weight.
pub const WEIGHT_CAP: f64 = 100.0;
/// Below this total weight every view counts as occluded.
pub const FALLBACK_THRESHOLD: f64 = 1e-6;

/// Unit vector from `x` toward the camera center.
pub fn view_direction(camera: &Camera, x: Vec3) -> Result<Vec3> {
    let d = camera.center() - x;
    let n = d.norm();
    if !(n > 0.0) {
        return Err(Error::InvalidInput("point coincides with the camera center".into()));
    }
    Ok(d / n)
}

pub fn visibility_weight(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0 - 1e-44);
    // -ln(1 - v) via ln_1p keeps small V exact
    (-(-v).ln_1p()).min(WEIGHT_CAP)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregatedFeature {
    pub values: Vec<f64>,
    /// Normalized weights (uniform `1/m` in the fallback path).
    pub weights: Vec<f64>,
    pub fallback: bool,
}

/// Weighted average of `features` (one row per view) with raw weights normalized to sum 1;
/// the unweighted mean with `fallback` set when the raw weights sum below 1e−6.
pub fn aggregate(features: &[&[f64]], raw_weights: &[f64]) -> Result<AggregatedFeature> {
    let m = features.len();
    if m == 0 {
        return Err(Error::InvalidInput("no views to aggregate".into()));
    }
    if raw_weights.len() != m {
        return Err(Error::InvalidInput(format!("{} weights for {m} views", raw_weights.len())));
    }
    let c = features[0].len();
    if features.iter().any(|f| f.len() != c) {
        return Err(Error::InvalidInput("views have different channel counts".into()));
    }
    let total: f64 = raw_weights.iter().sum();
    let (weights, fallback) = if total < FALLBACK_THRESHOLD {
        (vec![1.0 / m as f64; m], true)
    } else {
        (raw_weights.iter().map(|w| w / total).collect::<Vec<_>>(), false)
    };
    let mut values = vec![0.0; c];
    for (f, &w) in features.iter().zip(&weights) {
        for (v, x) in values.iter_mut().zip(f.iter()) {
            *v += w * x;
        }
    }
    Ok(AggregatedFeature {
        values,
        weights,
        fallback,
    })
}

/// Interpolated visibility of `values` (one entry per direction) toward each camera.
pub fn per_view_visibility(values: &[f64], x: Vec3, cameras: &[Camera], dirs: &DirectionSet, k: usize) -> Result<Vec<f64>> {
    cameras
        .iter()
        .map(|c| Ok(interpolate_visibility(values, dirs, view_direction(c, x)?, k)))
        .collect()
}

/// Bilinear sample of `image` at the projection of `x` (pixel centers at integer coordinates).
/// Taps outside the image read as zero; the flag is false when the projection falls
/// outside the image or behind the camera.
pub fn sample_view_feature(image: &Image, camera: &Camera, x: Vec3) -> (Vec<f64>, bool) {
    let c = image.channels;
    let Ok(p) = camera.project(x) else {
        return (vec![0.0; c], false);
    };
    let inside = p.u >= 0.0 && p.v >= 0.0 && p.u <= (image.width - 1) as f64 && p.v <= (image.height - 1) as f64;
    let (x0, y0) = (p.u.floor(), p.v.floor());
    let (fx, fy) = (p.u - x0, p.v - y0);
    let mut out = vec![0.0; c];
    for (dx, dy, w) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        if w == 0.0 {
            continue;
        }
        let (xi, yi) = (x0 as i64 + dx, y0 as i64 + dy);
        if xi < 0 || yi < 0 || xi >= image.width as i64 || yi >= image.height as i64 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(image.pixel(xi as usize, yi as usize)) {
            *o += w * v;
        }
    }
    (out, inside)
}

/// Cameras with one feature image each.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSet {
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
}

impl ViewSet {
    pub fn new(cameras: Vec<Camera>, images: Vec<Image>) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::InvalidInput("a view set needs at least one camera".into()));
        }
        if cameras.len() != images.len() {
            return Err(Error::InvalidInput(format!("{} cameras but {} images", cameras.len(), images.len())));
        }
        let c = images[0].channels;
        for (cam, img) in cameras.iter().zip(&images) {
            if img.channels != c {
                return Err(Error::InvalidInput("feature images have different channel counts".into()));
            }
            if img.width != cam.width || img.height != cam.height {
                return Err(Error::InvalidInput(format!(
                    "image is {}×{} but its camera is {}×{}",
                    img.width, img.height, cam.width, cam.height
                )));
            }
        }
        Ok(ViewSet { cameras, images })
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.images[0].channels
    }

    /// Per-view features of `x`, flattened `m × C`.
    pub fn features(&self, x: Vec3) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.channels());
        for (cam, img) in self.cameras.iter().zip(&self.images) {
            out.extend(sample_view_feature(img, cam, x).0);
        }
        out
    }
}

/// Default rig: `count` cameras at 90°-style even yaw spacing, elevation 0, distance 2.
pub fn default_rig(count: usize, width: usize, height: usize) -> Result<Vec<Camera>> {
    if count == 0 {
        return Err(Error::InvalidInput("view count must be at least 1".into()));
    }
    Camera::ring(count, 2.0, 0.0, 40f64.to_radians(), width, height)
}

/// Albedo render of `mesh` from `camera`: interpolated vertex color at the first hit
/// (white for colorless meshes), black background.
pub fn render_albedo_view(mesh: &TriangleMesh, bvh: &Bvh, camera: &Camera) -> Image {
    let mut img = Image::new(camera.width, camera.height, 3);
    for j in 0..camera.height {
        for i in 0..camera.width {
            if let Some(hit) = bvh.intersect(&camera.pixel_ray(i, j)) {
                let rgb = mesh.interpolate_albedo(hit.face, hit.barycentric).unwrap_or([1.0; 3]);
                img.pixel_mut(i, j).copy_from_slice(&rgb);
            }
        }
    }
    img
}

pub fn render_view_set(mesh: &TriangleMesh, cameras: Vec<Camera>) -> Result<ViewSet> {
    let bvh = Bvh::build(mesh)?;
    let images = cameras.iter().map(|c| render_albedo_view(mesh, &bvh, c)).collect();
    ViewSet::new(cameras, images)
}

#[derive(Serialize, Deserialize)]
struct SceneView {
    intrinsics: [[f64; 3]; 3],
    extrinsics: [[f64; 4]; 3],
    width: usize,
    height: usize,
    image: String,
}

#[derive(Serialize, Deserialize)]
struct SceneDoc {
    views: Vec<SceneView>,
}

/// Reads a scene description; image paths resolve against the JSON file's directory.
pub fn load_view_set(path: impl AsRef<Path>) -> Result<ViewSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: SceneDoc = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cameras = Vec::new();
    let mut images = Vec::new();
    for v in doc.views {
        cameras.push(Camera::new(v.intrinsics, v.extrinsics, v.width, v.height)?);
        images.push(load_image(base.join(&v.image))?);
    }
    ViewSet::new(cameras, images)
}

/// Writes `<dir>/<stem>_<i>.pfm` images and `<dir>/<stem>.json`; returns the JSON path.
pub fn save_view_set(views: &ViewSet, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let mut doc = SceneDoc { views: Vec::new() };
    for (i, (cam, img)) in views.cameras.iter().zip(&views.images).enumerate() {
        let name = format!("{stem}_{i}.pfm");
        save_image(img, dir.join(&name))?;
        doc.views.push(SceneView {
            intrinsics: cam.intrinsics,
            extrinsics: cam.extrinsics,
            width: cam.width,
            height: cam.height,
            image: name,
        });
    }
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&doc).expect("scene serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirsphere::random_unit;
    use crate::geom::{shapes, Ray};
    use crate::oracle::{trace_visibility, VISIBILITY_T_MIN};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn directions_point_at_the_camera() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 5.0), Vec3::ZERO, Vec3::Y, 0.5, 8, 8).unwrap();
        let d = view_direction(&cam, Vec3::ZERO).unwrap();
        assert!((d - Vec3::Z).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let eye = random_unit(&mut rng) * rng.random_range(1.5..4.0);
            let cam = Camera::look_at(eye, Vec3::ZERO, eye.any_orthonormal(), 0.5, 8, 8).unwrap();
            let x = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let d = view_direction(&cam, x).unwrap();
            assert!((d.norm() - 1.0).abs() < 1e-12);
            let want = (eye - x).normalized();
            assert!((d - want).norm() < 1e-12);
        }
        let c = cam_at_origin();
        assert!(view_direction(&c, c.center()).is_err());
    }

    fn cam_at_origin() -> Camera {
        Camera::look_at(Vec3::ZERO, Vec3::Z, Vec3::Y, 0.5, 4, 4).unwrap()
    }

    #[test]
    fn weight_contract() {
        assert_eq!(visibility_weight(0.0), 0.0);
        assert!((visibility_weight(1.0 - (-1f64).exp()) - 1.0).abs() < 1e-12);
        assert_eq!(visibility_weight(1.0), WEIGHT_CAP);
        let mut last = 0.0;
        for i in 0..=1000 {
            let w = visibility_weight(i as f64 / 1000.0);
            assert!(w >= last);
            last = w;
        }
    }

    #[test]
    fn aggregation_paths() {
        let f: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![3.0, 5.0], vec![-1.0, 0.0]];
        let rows: Vec<&[f64]> = f.iter().map(|r| r.as_slice()).collect();
        let one = aggregate(&rows, &[0.0, 0.7, 0.0]).unwrap();
        assert_eq!(one.values, vec![3.0, 5.0]);
        assert!(!one.fallback);
        let eq = aggregate(&rows, &[2.0, 2.0, 2.0]).unwrap();
        assert!((eq.values[0] - 1.0).abs() < 1e-15 && (eq.values[1] - 7.0 / 3.0).abs() < 1e-15);
        let none = aggregate(&rows, &[0.0; 3]).unwrap();
        assert!(none.fallback);
        assert!((none.values[1] - 7.0 / 3.0).abs() < 1e-15);
        assert!(aggregate(&[], &[]).is_err());
    }

    #[test]
    fn sphere_front_and_back_views() {
        let s = shapes::icosphere(3, 0.5);
        let bvh = Bvh::build(&s).unwrap();
        let dirs = DirectionSet::fibonacci(64).unwrap();
        let x = Vec3::new(0.0, 0.0, 0.5 + 1e-3);
        let v = trace_visibility(&bvh, x, &dirs).to_values();
        let front = Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, Vec3::Y, 0.5, 8, 8).unwrap();
        let back = Camera::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::ZERO, Vec3::Y, 0.5, 8, 8).unwrap();
        let pv = per_view_visibility(&v, x, &[front.clone(), back.clone()], &dirs, 4).unwrap();
        // oracle: trace the actual camera rays
        for (cam, got) in [(&front, pv[0]), (&back, pv[1])] {
            let w = view_direction(cam, x).unwrap();
            let t = (cam.center() - x).norm();
            let free = !bvh.any_hit(&Ray::new(x, w).with_range(VISIBILITY_T_MIN, t));
            assert!((got - if free { 1.0 } else { 0.0 }).abs() < 0.05, "{got}");
        }
        assert!(pv[0] > 0.95 && pv[1] < 0.05);
        let single = per_view_visibility(&v, x, &[back.clone()], &dirs, 4).unwrap();
        assert_eq!(single[0], interpolate_visibility(&v, &dirs, view_direction(&back, x).unwrap(), 4));
    }

    #[test]
    fn bilinear_sampling() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, Vec3::Y, 0.6, 9, 7).unwrap();
        let mut img = Image::new(9, 7, 2);
        for (k, v) in img.data.iter_mut().enumerate() {
            *v = (k as f64 * 0.13).cos();
        }
        // a point projecting onto pixel (3, 2) exactly
        let x = cam.unproject(3.0, 2.0, 2.5);
        let (f, ok) = sample_view_feature(&img, &cam, x);
        assert!(ok);
        for c in 0..2 {
            assert!((f[c] - img.get(3, 2, c)).abs() < 1e-9);
        }
        let x = cam.unproject(3.5, 2.5, 2.5);
        let (f, _) = sample_view_feature(&img, &cam, x);
        for c in 0..2 {
            let mean = (img.get(3, 2, c) + img.get(4, 2, c) + img.get(3, 3, c) + img.get(4, 3, c)) / 4.0;
            assert!((f[c] - mean).abs() < 1e-9);
        }
        let flat = Image::filled(9, 7, 3, 0.25);
        let (f, _) = sample_view_feature(&flat, &cam, cam.unproject(6.3, 1.7, 2.0));
        assert!(f.iter().all(|v| (v - 0.25).abs() < 1e-12));
        let (f, ok) = sample_view_feature(&flat, &cam, cam.unproject(-5.0, 1.0, 2.0));
        assert!(!ok && f.iter().all(|&v| v == 0.0));
        let (_, ok) = sample_view_feature(&flat, &cam, Vec3::new(0.0, 0.0, 10.0));
        assert!(!ok);
    }

    #[test]
    fn scene_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let views = render_view_set(&shapes::blob(2), default_rig(4, 16, 12).unwrap()).unwrap();
        let path = save_view_set(&views, dir.path(), "scene").unwrap();
        let back = load_view_set(&path).unwrap();
        assert_eq!(back.cameras, views.cameras);
        for (a, b) in back.images.iter().zip(&views.images) {
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| *x == *y as f32 as f64));
        }
        // the rig sees the object: some non-background pixels in each view
        assert!(views.images.iter().all(|im| im.data.iter().any(|&v| v > 0.0)));
    }

    fn check_aggregate(feats: &[Vec<f64>], vis: &[f64]) -> std::result::Result<(), TestCaseError> {
        let rows: Vec<&[f64]> = feats.iter().map(|r| r.as_slice()).collect();
        let w: Vec<f64> = vis.iter().map(|&v| visibility_weight(v)).collect();
        let a = aggregate(&rows, &w).unwrap();
        for c in 0..feats[0].len() {
            let lo = feats.iter().map(|f| f[c]).fold(f64::INFINITY, f64::min);
            let hi = feats.iter().map(|f| f[c]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(a.values[c] >= lo - 1e-9 && a.values[c] <= hi + 1e-9);
        }
        prop_assert!(a.weights.iter().all(|&w| w >= 0.0));
        if !a.fallback {
            prop_assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        // permutation: reverse the views
        let rev_rows: Vec<&[f64]> = rows.iter().rev().copied().collect();
        let rev_w: Vec<f64> = w.iter().rev().copied().collect();
        let b = aggregate(&rev_rows, &rev_w).unwrap();
        for (x, y) in a.weights.iter().zip(b.weights.iter().rev()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        Ok(())
    }

    proptest! {
        #[test]
        fn aggregation_properties(
            feats in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 1..6),
            vis_seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(vis_seed);
            let vis: Vec<f64> = feats.iter().map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random() }).collect();
            check_aggregate(&feats, &vis)?;
        }

        #[test]
        fn raising_visibility_never_lowers_share(
            vis in proptest::collection::vec(0.0f64..1.0, 2..6),
            bump in 0.0f64..1.0,
        ) {
            let w: Vec<f64> = vis.iter().map(|&v| visibility_weight(v)).collect();
            let total: f64 = w.iter().sum();
            prop_assume!(total >= FALLBACK_THRESHOLD);
            let share = w[0] / total;
            let mut w2 = w.clone();
            w2[0] = visibility_weight(vis[0] + (1.0 - vis[0]) * bump);
            let share2 = w2[0] / w2.iter().sum::<f64>();
            prop_assert!(share2 >= share - 1e-12);
        }

        #[test]
        fn occluded_views_are_suppressed(v_occ in 0.0f64..0.01, v_vis in 0.6322f64..1.0) {
            let (wo, wv) = (visibility_weight(v_occ), visibility_weight(v_vis));
            prop_assume!(wv >= 1.0);
            let share = wo / (wo + wv);
            prop_assert!(share < 0.011 / (0.011 + wv));
        }
    }
}
