//! Query points with their fixed inputs precomputed, and the batched forward pass that
//! chains visibility → visibility-guided aggregation → occupancy / albedo.

use rayon::prelude::*;

use super::encoding::{grid_features, grid_taps, positional, GridTaps};
use super::{mlp, sigmoid, Architecture, FieldModel, Head};
use crate::dirsphere::DirectionSet;
use crate::geom::Vec3;
use crate::viewagg::{aggregate, view_direction, visibility_weight, ViewSet};
use crate::{Error, Result};

/// Points per forward chunk; fixed so results never depend on the thread count.
pub(crate) const CHUNK: usize = 256;

/// Everything about a query point that does not depend on the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedPoint {
    pub position: Vec3,
    pub(crate) positional: Vec<f64>,
    pub(crate) taps: GridTaps,
    pub clamped: bool,
    /// Per-view features, `m × Cv`.
    pub(crate) view_features: Vec<f64>,
    /// Unweighted mean of the per-view features.
    pub(crate) f_avg: Vec<f64>,
    /// For each view, the `k` nearest directions with normalized interpolation weights.
    pub(crate) view_taps: Vec<Vec<(usize, f64)>>,
}

impl PreparedPoint {
    pub fn new(arch: &Architecture, x: Vec3, views: &ViewSet, dirs: &DirectionSet, k: usize) -> Result<Self> {
        if dirs.len() != arch.directions {
            return Err(Error::Config(format!(
                "model predicts {} directions but the direction set has {}",
                arch.directions,
                dirs.len()
            )));
        }
        if views.channels() != arch.view_channels {
            return Err(Error::Config(format!(
                "views carry {} channels but the model expects {}",
                views.channels(),
                arch.view_channels
            )));
        }
        let mut pe = Vec::with_capacity(3 + 6 * arch.octaves);
        positional(x, arch.octaves, &mut pe);
        let (taps, clamped) = grid_taps(arch.grid_resolution, arch.grid_channels, x);
        let view_features = views.features(x);
        let m = views.len();
        let cv = arch.view_channels;
        let f_avg = (0..cv)
            .map(|c| (0..m).map(|j| view_features[j * cv + c]).sum::<f64>() / m as f64)
            .collect();
        let view_taps = views
            .cameras
            .iter()
            .map(|cam| {
                let w = view_direction(cam, x)?;
                let top = dirs.top_k(w, k);
                let clamped: Vec<f64> = top.iter().map(|&(_, c)| c.max(crate::dirsphere::MIN_COSINE)).collect();
                let den: f64 = clamped.iter().sum();
                Ok(top.iter().zip(&clamped).map(|(&(i, _), &c)| (i, c / den)).collect())
            })
            .collect::<Result<_>>()?;
        Ok(PreparedPoint {
            position: x,
            positional: pe,
            taps,
            clamped,
            view_features,
            f_avg,
            view_taps,
        })
    }

    pub fn f_avg(&self) -> &[f64] {
        &self.f_avg
    }
}

pub fn prepare_points(arch: &Architecture, points: &[Vec3], views: &ViewSet, dirs: &DirectionSet, k: usize) -> Result<Vec<PreparedPoint>> {
    points.par_iter().map(|&x| PreparedPoint::new(arch, x, views, dirs, k)).collect()
}

/// Encoding rows `B × E` for a batch.
pub(crate) fn encoding_rows(model: &FieldModel, pts: &[&PreparedPoint]) -> Vec<f64> {
    let e = model.arch.encoding_dim();
    let grid = &model.params[model.layout.grid.0..model.layout.grid.1];
    let mut out = Vec::with_capacity(pts.len() * e);
    for p in pts {
        out.extend_from_slice(&p.positional);
        grid_features(grid, &p.taps, model.arch.grid_channels, &mut out);
    }
    out
}

pub(crate) fn with_features(enc: &[f64], e: usize, feats: &[f64], cv: usize) -> Vec<f64> {
    let rows = enc.len() / e;
    let mut out = Vec::with_capacity(rows * (e + cv));
    for r in 0..rows {
        out.extend_from_slice(&enc[r * e..(r + 1) * e]);
        out.extend_from_slice(&feats[r * cv..(r + 1) * cv]);
    }
    out
}

/// Visibility-guided aggregation of one point's view features from its visibility logits.
/// Returns the aggregated feature and whether the all-occluded fallback was used.
pub(crate) fn aggregate_point(p: &PreparedPoint, vis_logits: &[f64], cv: usize) -> (Vec<f64>, bool) {
    let weights: Vec<f64> = p
        .view_taps
        .iter()
        .map(|taps| {
            let v: f64 = taps.iter().map(|&(i, w)| w * sigmoid(vis_logits[i])).sum();
            visibility_weight(v)
        })
        .collect();
    let rows: Vec<&[f64]> = p.view_features.chunks(cv).collect();
    let a = aggregate(&rows, &weights).expect("prepared points have at least one view");
    (a.values, a.fallback)
}

pub(crate) fn aggregate_rows(pts: &[&PreparedPoint], vis_out: &[f64], n: usize, cv: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(pts.len() * cv);
    for (r, p) in pts.iter().enumerate() {
        out.extend(aggregate_point(p, &vis_out[r * n..(r + 1) * n], cv).0);
    }
    out
}

/// Raw head outputs for a set of prepared points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueryOutput {
    /// `B × n` visibility logits.
    pub visibility: Vec<f64>,
    /// Occupancy logits (empty unless requested).
    pub occupancy: Vec<f64>,
    /// `B × 3` albedo logits (empty unless requested).
    pub albedo: Vec<f64>,
    /// Points whose aggregation fell back to the unweighted mean.
    pub fallbacks: usize,
}

impl FieldModel {
    /// Runs the visibility head, aggregates view features with the predicted visibility,
    /// then the requested occupancy / albedo heads. Chunked and order-preserving.
    pub fn query(&self, pts: &[PreparedPoint], occupancy: bool, albedo: bool) -> QueryOutput {
        let n = self.arch.directions;
        let e = self.arch.encoding_dim();
        let cv = self.arch.view_channels;
        let parts: Vec<QueryOutput> = pts
            .par_chunks(CHUNK)
            .map(|chunk| {
                let refs: Vec<&PreparedPoint> = chunk.iter().collect();
                let rows = refs.len();
                let enc = encoding_rows(self, &refs);
                let favg: Vec<f64> = refs.iter().flat_map(|p| p.f_avg.iter().copied()).collect();
                let vis = mlp::forward(&self.params, self.layout.head(Head::Visibility), &with_features(&enc, e, &favg, cv), rows).out;
                let mut out = QueryOutput::default();
                if occupancy || albedo {
                    let mut agg = Vec::with_capacity(rows * cv);
                    for (r, p) in refs.iter().enumerate() {
                        let (v, fb) = aggregate_point(p, &vis[r * n..(r + 1) * n], cv);
                        agg.extend(v);
                        out.fallbacks += fb as usize;
                    }
                    let input = with_features(&enc, e, &agg, cv);
                    if occupancy {
                        out.occupancy = mlp::forward(&self.params, self.layout.head(Head::Occupancy), &input, rows).out;
                    }
                    if albedo {
                        out.albedo = mlp::forward(&self.params, self.layout.head(Head::Albedo), &input, rows).out;
                    }
                }
                out.visibility = vis;
                out
            })
            .collect();
        let mut out = QueryOutput::default();
        for p in parts {
            out.visibility.extend(p.visibility);
            out.occupancy.extend(p.occupancy);
            out.albedo.extend(p.albedo);
            out.fallbacks += p.fallbacks;
        }
        out
    }
}
