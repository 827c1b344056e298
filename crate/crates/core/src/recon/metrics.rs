use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{sample_surface, Bvh, SurfaceSample, TriangleMesh};
use crate::image::Image;
use crate::{Error, Result};

/// Reported PSNR when the masked error is exactly zero.
pub const PSNR_SENTINEL: f64 = 99.0;

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub nc: f64,
    pub cd_l1: f64,
    pub f_score: f64,
    pub precision: f64,
    pub recall: f64,
    pub samples: usize,
    /// Absolute F-score distance threshold.
    pub tau: f64,
}

// MC output can contain slivers; they carry no area and are dropped before tracing.
fn query_bvh(mesh: &TriangleMesh) -> Result<Bvh> {
    if mesh.faces.is_empty() {
        return Err(Error::InvalidInput("mesh has no faces".into()));
    }
    if mesh.degenerate_faces().is_empty() {
        Bvh::build(mesh)
    } else {
        let mut m = mesh.clone();
        m.drop_degenerate();
        Bvh::build(&m)
    }
}

fn distances(points: &[SurfaceSample], to: &Bvh) -> Vec<f64> {
    points.par_iter().map(|s| to.closest_point(s.point).distance).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct Sampled {
    pred: Vec<SurfaceSample>,
    gt: Vec<SurfaceSample>,
    pred_bvh: Bvh,
    gt_bvh: Bvh,
    unit: f64,
}

fn prepare(pred: &TriangleMesh, gt: &TriangleMesh, samples: usize, seed: u64) -> Result<Sampled> {
    let unit = gt.bounds().max_edge();
    if !(unit > 0.0) {
        return Err(Error::InvalidInput("ground-truth mesh has a degenerate bounding box".into()));
    }
    Ok(Sampled {
        pred: sample_surface(pred, samples, seed)?,
        gt: sample_surface(gt, samples, seed.wrapping_add(1))?,
        pred_bvh: query_bvh(pred)?,
        gt_bvh: query_bvh(gt)?,
        unit,
    })
}

fn cd_from(d_pg: &[f64], d_gp: &[f64], unit: f64) -> f64 {
    0.5 * (mean(d_pg) + mean(d_gp)) / (unit / 10.0)
}

fn f_from(d_pg: &[f64], d_gp: &[f64], tau: f64) -> (f64, f64, f64) {
    let precision = d_pg.iter().filter(|&&d| d < tau).count() as f64 / d_pg.len() as f64;
    let recall = d_gp.iter().filter(|&&d| d < tau).count() as f64 / d_gp.len() as f64;
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (f, precision, recall)
}

fn nc_from(pred: &[SurfaceSample], gt_mesh: &TriangleMesh, gt_bvh: &Bvh) -> f64 {
    let dots: Vec<f64> = pred
        .par_iter()
        .map(|s| {
            let cp = gt_bvh.closest_point(s.point);
            let n = gt_mesh.interpolate_normal(cp.face, cp.barycentric);
            s.normal.dot(n).abs().min(1.0)
        })
        .collect();
    mean(&dots)
}

/// Symmetric mean surface-to-surface distance in units of one tenth of the GT's longest bbox edge.
pub fn chamfer_l1(pred: &TriangleMesh, gt: &TriangleMesh, samples: usize, seed: u64) -> Result<f64> {
    let s = prepare(pred, gt, samples, seed)?;
    Ok(cd_from(&distances(&s.pred, &s.gt_bvh), &distances(&s.gt, &s.pred_bvh), s.unit))
}

/// Mean `|n_pred · n_gt|` from prediction samples to their closest GT points (one-directional).
pub fn normal_consistency(pred: &TriangleMesh, gt: &TriangleMesh, samples: usize, seed: u64) -> Result<f64> {
    let pred_samples = sample_surface(pred, samples, seed)?;
    let gt_bvh = query_bvh(gt)?;
    Ok(nc_from(&pred_samples, gt, &gt_bvh))
}

/// `(F, precision, recall)` at `tau = tau_fraction · max GT bbox edge`.
pub fn f_score(pred: &TriangleMesh, gt: &TriangleMesh, tau_fraction: f64, samples: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let s = prepare(pred, gt, samples, seed)?;
    Ok(f_from(
        &distances(&s.pred, &s.gt_bvh),
        &distances(&s.gt, &s.pred_bvh),
        tau_fraction * s.unit,
    ))
}

/// All geometry metrics from one shared set of samples.
pub fn evaluate_geometry(pred: &TriangleMesh, gt: &TriangleMesh, tau_fraction: f64, samples: usize, seed: u64) -> Result<MetricReport> {
    let s = prepare(pred, gt, samples, seed)?;
    let d_pg = distances(&s.pred, &s.gt_bvh);
    let d_gp = distances(&s.gt, &s.pred_bvh);
    let tau = tau_fraction * s.unit;
    let (f, precision, recall) = f_from(&d_pg, &d_gp, tau);
    Ok(MetricReport {
        nc: nc_from(&s.pred, gt, &s.gt_bvh),
        cd_l1: cd_from(&d_pg, &d_gp, s.unit),
        f_score: f,
        precision,
        recall,
        samples,
        tau,
    })
}

fn check_pair(pred: &Image, gt: &Image, mask: Option<&Image>) -> Result<()> {
    if !pred.same_shape(gt) {
        return Err(Error::InvalidInput(format!(
            "image shapes differ: {}×{}×{} vs {}×{}×{}",
            pred.width, pred.height, pred.channels, gt.width, gt.height, gt.channels
        )));
    }
    if let Some(m) = mask {
        if m.width != gt.width || m.height != gt.height || m.channels != 1 {
            return Err(Error::InvalidInput("mask must be single-channel with the image's size".into()));
        }
    }
    Ok(())
}

#[inline]
fn masked(mask: Option<&Image>, x: usize, y: usize) -> bool {
    mask.is_none_or(|m| m.get(x, y, 0) > 0.0)
}

/// `10·log10(1/MSE)` over masked pixels and all channels; [`PSNR_SENTINEL`] when MSE is zero.
pub fn psnr(pred: &Image, gt: &Image, mask: Option<&Image>) -> Result<f64> {
    check_pair(pred, gt, mask)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in 0..gt.height {
        for x in 0..gt.width {
            if !masked(mask, x, y) {
                continue;
            }
            for (a, b) in pred.pixel(x, y).iter().zip(gt.pixel(x, y)) {
                sum += (a - b) * (a - b);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput("mask selects no pixels".into()));
    }
    let mse = sum / count as f64;
    Ok(if mse == 0.0 { PSNR_SENTINEL } else { 10.0 * (1.0 / mse).log10() })
}

fn gaussian_taps() -> [f64; 2 * SSIM_RADIUS + 1] {
    let mut g = [0.0; 2 * SSIM_RADIUS + 1];
    for (i, t) in g.iter_mut().enumerate() {
        let d = i as f64 - SSIM_RADIUS as f64;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    g
}

/// Separable Gaussian filter with zero padding.
fn blur(src: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let r = SSIM_RADIUS as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (t, &gw) in g.iter().enumerate() {
                let xx = x as isize + t as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    s += gw * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (t, &gw) in g.iter().enumerate() {
                let yy = y as isize + t as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    s += gw * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// SSIM from window moments (weight sum, sums of x, y, x², y², xy).
pub fn ssim_window(sw: f64, sx: f64, sy: f64, sxx: f64, syy: f64, sxy: f64) -> f64 {
    let mx = sx / sw;
    let my = sy / sw;
    let vx = sxx / sw - mx * mx;
    let vy = syy / sw - my * my;
    let cxy = sxy / sw - mx * my;
    ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2)) / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
}

/// Masked SSIM: 11×11 Gaussian window (σ = 1.5) whose weights are restricted to masked,
/// in-image pixels and renormalized; averaged over masked window centers, per channel,
/// then over channels.
pub fn ssim(pred: &Image, gt: &Image, mask: Option<&Image>) -> Result<f64> {
    check_pair(pred, gt, mask)?;
    let (w, h) = (gt.width, gt.height);
    let m: Vec<f64> = (0..w * h)
        .map(|i| if masked(mask, i % w, i / w) { 1.0 } else { 0.0 })
        .collect();
    let centers: Vec<usize> = (0..w * h).filter(|&i| m[i] > 0.0).collect();
    if centers.is_empty() {
        return Err(Error::InvalidInput("mask selects no pixels".into()));
    }
    let g = gaussian_taps();
    let sw = blur(&m, w, h, &g);
    let mut total = 0.0;
    for c in 0..gt.channels {
        let x: Vec<f64> = (0..w * h).map(|i| pred.data[i * gt.channels + c] * m[i]).collect();
        let y: Vec<f64> = (0..w * h).map(|i| gt.data[i * gt.channels + c] * m[i]).collect();
        let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p * q).collect() };
        let sx = blur(&x, w, h, &g);
        let sy = blur(&y, w, h, &g);
        let sxx = blur(&prod(&x, &x), w, h, &g);
        let syy = blur(&prod(&y, &y), w, h, &g);
        let sxy = blur(&prod(&x, &y), w, h, &g);
        let sum: f64 = centers
            .iter()
            .map(|&i| ssim_window(sw[i], sx[i], sy[i], sxx[i], syy[i], sxy[i]))
            .sum();
        total += sum / centers.len() as f64;
    }
    Ok(total / gt.channels as f64)
}
