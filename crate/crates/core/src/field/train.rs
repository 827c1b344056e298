//! Batched loss evaluation with hand-written backpropagation, Adam and the cyclic schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batch::{aggregate_rows, encoding_rows, with_features, PreparedPoint, CHUNK};
use super::loss::{albedo_grad, bce_logits, transfer_grad, visibility_bce_grad};
use super::{mlp, Architecture, FieldModel, Head, HeadLayout};
use crate::dirsphere::DirectionSet;
use crate::geom::{PointKind, Vec3};
use crate::oracle::BakedDataset;
use crate::viewagg::ViewSet;
use crate::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub visibility: f64,
    pub transfer: f64,
    pub occupancy: f64,
    pub albedo: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            visibility: 1.0,
            transfer: 1.0,
            occupancy: 1.0,
            albedo: 1.0,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.visibility, self.transfer, self.occupancy, self.albedo]
    }

    /// Only term `i` (in visibility, transfer, occupancy, albedo order) switched on.
    pub fn only(i: usize) -> Self {
        let mut w = [0.0; 4];
        w[i] = 1.0;
        LossWeights {
            visibility: w[0],
            transfer: w[1],
            occupancy: w[2],
            albedo: w[3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub max_lr: f64,
    /// Length of one triangular LR cycle, in epochs.
    pub cycle_epochs: f64,
    /// The peak LR halves after every this many epochs.
    pub halving_epochs: f64,
    pub weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 600,
            batch_size: 512,
            base_lr: 5e-5,
            max_lr: 5e-4,
            cycle_epochs: 5.0,
            halving_epochs: 100.0,
            weights: LossWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr < self.max_lr && self.max_lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rates need 0 < base_lr < max_lr, got {} and {}",
                self.base_lr, self.max_lr
            )));
        }
        if !(self.cycle_epochs > 0.0 && self.halving_epochs > 0.0) {
            return Err(Error::Config("cycle and halving periods must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let w = self.weights.as_array();
        if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative, got {w:?}")));
        }
        Ok(())
    }
}

/// Triangular cyclic learning rate at a (fractional) epoch.
pub fn lr_at(config: &TrainConfig, epoch: f64) -> f64 {
    let block = (epoch / config.halving_epochs).floor();
    let peak = config.max_lr * (-block).exp2();
    let phase = (epoch / config.cycle_epochs).fract();
    let tri = 1.0 - (2.0 * phase - 1.0).abs();
    // written as a blend so both endpoints are hit exactly
    config.base_lr * (1.0 - tri) + peak * tri
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
}

/// A baked sample with its parameter-independent inputs precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    pub point: PreparedPoint,
    pub kind: PointKind,
    /// Ground-truth visibility as 0/1 values.
    pub visibility: Vec<f64>,
    pub occupancy: bool,
    pub normal: Vec3,
    pub albedo: Option<[f64; 3]>,
}

#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub arch: Architecture,
    pub dirs: DirectionSet,
    pub samples: Vec<PreparedSample>,
}

impl TrainingSet {
    /// `k` is the number of directions blended when reading visibility toward a camera.
    pub fn new(dataset: &BakedDataset, views: &ViewSet, arch: &Architecture, k: usize) -> Result<Self> {
        let dirs = dataset.direction_set()?;
        let samples = dataset
            .samples
            .par_iter()
            .map(|s| {
                Ok(PreparedSample {
                    point: PreparedPoint::new(arch, s.position, views, &dirs, k)?,
                    kind: s.kind,
                    visibility: s.visibility.to_values(),
                    occupancy: s.occupancy,
                    normal: s.normal,
                    albedo: s.albedo,
                })
            })
            .collect::<Result<_>>()?;
        Ok(TrainingSet {
            arch: *arch,
            dirs,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Mean of every loss term over its own supervised subset, plus their weighted total.
/// Visibility BCE covers all samples, the transfer loss only surface samples, occupancy
/// the near and uniform samples, albedo the samples carrying an albedo target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub visibility: f64,
    pub transfer: f64,
    pub occupancy: f64,
    pub albedo: f64,
    pub total: f64,
    /// Fraction of visibility bits on surface samples predicted correctly at 0.5.
    pub near_surface_accuracy: f64,
    pub weights: LossWeights,
    /// Sample counts of the four subsets.
    pub counts: [usize; 4],
    pub correct_bits: usize,
    pub surface_bits: usize,
}

impl LossReport {
    fn from_sums(sums: [f64; 4], counts: [usize; 4], correct_bits: usize, surface_bits: usize, weights: LossWeights) -> Self {
        let mean = |i: usize| if counts[i] == 0 { 0.0 } else { sums[i] / counts[i] as f64 };
        let terms = [mean(0), mean(1), mean(2), mean(3)];
        let total = terms.iter().zip(weights.as_array()).map(|(t, w)| t * w).sum();
        LossReport {
            visibility: terms[0],
            transfer: terms[1],
            occupancy: terms[2],
            albedo: terms[3],
            total,
            near_surface_accuracy: if surface_bits == 0 { 0.0 } else { correct_bits as f64 / surface_bits as f64 },
            weights,
            counts,
            correct_bits,
            surface_bits,
        }
    }

    pub fn terms(&self) -> [f64; 4] {
        [self.visibility, self.transfer, self.occupancy, self.albedo]
    }

    /// Combines reports of disjoint batches into one over their union.
    pub fn merge(reports: &[LossReport]) -> LossReport {
        let weights = reports.first().map(|r| r.weights).unwrap_or_default();
        let mut sums = [0.0; 4];
        let mut counts = [0; 4];
        let (mut correct, mut bits) = (0, 0);
        for r in reports {
            for (i, t) in r.terms().iter().enumerate() {
                sums[i] += t * r.counts[i] as f64;
                counts[i] += r.counts[i];
            }
            correct += r.correct_bits;
            bits += r.surface_bits;
        }
        LossReport::from_sums(sums, counts, correct, bits, weights)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Learning rate at the start of the epoch.
    pub lr: f64,
    pub loss: LossReport,
}

fn occupancy_supervised(kind: PointKind) -> bool {
    kind != PointKind::Surface
}

/// Head layout re-based so the head parameters start right after the grid.
fn rebased(h: &HeadLayout, by: usize) -> HeadLayout {
    HeadLayout::new(h.start() - by, h.input, h.hidden, h.output)
}

struct ChunkOut {
    sums: [f64; 4],
    correct: usize,
    bits: usize,
    f_agg: Vec<f64>,
    /// Gradient of the head parameters (everything after the grid).
    dense: Vec<f64>,
    /// Sparse grid gradient as (parameter index, value).
    grid: Vec<(usize, f64)>,
}

pub(crate) struct BatchResult {
    pub report: LossReport,
    pub grad: Option<Vec<f64>>,
    /// Aggregated view features used by the occupancy and albedo heads, `B × Cv`.
    pub f_agg: Vec<f64>,
}

/// Loss over `batch` and, when `want_grad`, its gradient with respect to every parameter.
/// The aggregation weights are treated as constants; `f_agg` overrides the aggregated
/// features entirely (used to freeze them for finite differences).
pub(crate) fn batch_loss(
    model: &FieldModel,
    set: &TrainingSet,
    batch: &[usize],
    weights: &LossWeights,
    f_agg: Option<&[f64]>,
    want_grad: bool,
) -> BatchResult {
    let arch = &model.arch;
    let (n, e, cv) = (arch.directions, arch.encoding_dim(), arch.view_channels);
    let g_len = model.layout.grid.1;
    let pe_len = 3 + 6 * arch.octaves;
    let gc = arch.grid_channels;

    let mut counts = [batch.len(), 0, 0, 0];
    for &i in batch {
        let s = &set.samples[i];
        counts[1] += (s.kind == PointKind::Surface) as usize;
        counts[2] += occupancy_supervised(s.kind) as usize;
        counts[3] += s.albedo.is_some() as usize;
    }
    let lw = weights.as_array();
    let scale: [f64; 4] = std::array::from_fn(|i| if counts[i] == 0 || !want_grad { 0.0 } else { lw[i] / counts[i] as f64 });

    let heads: [HeadLayout; 3] = std::array::from_fn(|h| rebased(&model.layout.heads[h], g_len));
    let head_params = &model.params[g_len..];

    let outs: Vec<ChunkOut> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, idx)| {
            let rows = idx.len();
            let pts: Vec<&PreparedPoint> = idx.iter().map(|&i| &set.samples[i].point).collect();
            let enc = encoding_rows(model, &pts);
            let favg: Vec<f64> = pts.iter().flat_map(|p| p.f_avg.iter().copied()).collect();
            let vis_in = with_features(&enc, e, &favg, cv);
            let vis = mlp::forward(head_params, &heads[Head::Visibility as usize], &vis_in, rows);
            let agg = match f_agg {
                Some(f) => f[ci * CHUNK * cv..(ci * CHUNK + rows) * cv].to_vec(),
                None => aggregate_rows(&pts, &vis.out, n, cv),
            };
            let ao_in = with_features(&enc, e, &agg, cv);
            let occ = mlp::forward(head_params, &heads[Head::Occupancy as usize], &ao_in, rows);
            let alb = mlp::forward(head_params, &heads[Head::Albedo as usize], &ao_in, rows);

            let mut sums = [0.0; 4];
            let (mut correct, mut bits) = (0, 0);
            let mut d_vis = vec![0.0; rows * n];
            let mut d_occ = vec![0.0; rows];
            let mut d_alb = vec![0.0; rows * 3];
            for (r, &i) in idx.iter().enumerate() {
                let s = &set.samples[i];
                let z = &vis.out[r * n..(r + 1) * n];
                let dz = &mut d_vis[r * n..(r + 1) * n];
                sums[0] += visibility_bce_grad(z, &s.visibility, scale[0], dz);
                if s.kind == PointKind::Surface {
                    sums[1] += transfer_grad(z, &s.visibility, s.normal, &set.dirs, scale[1], dz);
                    correct += z.iter().zip(&s.visibility).filter(|(&z, &v)| (z >= 0.0) == (v == 1.0)).count();
                    bits += n;
                }
                if occupancy_supervised(s.kind) {
                    let (l, d) = bce_logits(occ.out[r], if s.occupancy { 1.0 } else { 0.0 });
                    sums[2] += l;
                    d_occ[r] = scale[2] * d;
                }
                if let Some(t) = &s.albedo {
                    if let Some(l) = albedo_grad(&alb.out[r * 3..r * 3 + 3], t, scale[3], &mut d_alb[r * 3..r * 3 + 3]) {
                        sums[3] += l;
                    }
                }
            }

            let mut dense = Vec::new();
            let mut grid = Vec::new();
            if want_grad {
                dense = vec![0.0; head_params.len()];
                let dx_vis = mlp::backward(head_params, &heads[0], &vis_in, &vis, &d_vis, &mut dense);
                let dx_occ = mlp::backward(head_params, &heads[1], &ao_in, &occ, &d_occ, &mut dense);
                let dx_alb = mlp::backward(head_params, &heads[2], &ao_in, &alb, &d_alb, &mut dense);
                let w = e + cv;
                grid.reserve(rows * 8 * gc);
                for (r, p) in pts.iter().enumerate() {
                    let col = |c: usize| {
                        let j = r * w + pe_len + c;
                        dx_vis[j] + dx_occ[j] + dx_alb[j]
                    };
                    let dg: Vec<f64> = (0..gc).map(col).collect();
                    for (&o, &tw) in p.taps.offsets.iter().zip(&p.taps.weights) {
                        if tw == 0.0 {
                            continue;
                        }
                        for (c, &d) in dg.iter().enumerate() {
                            grid.push((o + c, tw * d));
                        }
                    }
                }
            }
            ChunkOut {
                sums,
                correct,
                bits,
                f_agg: agg,
                dense,
                grid,
            }
        })
        .collect();

    let mut sums = [0.0; 4];
    let (mut correct, mut bits) = (0, 0);
    let mut all_agg = Vec::with_capacity(batch.len() * cv);
    let mut grad = want_grad.then(|| vec![0.0; model.params.len()]);
    for o in outs {
        for i in 0..4 {
            sums[i] += o.sums[i];
        }
        correct += o.correct;
        bits += o.bits;
        all_agg.extend(o.f_agg);
        if let Some(g) = grad.as_mut() {
            for (a, b) in g[g_len..].iter_mut().zip(&o.dense) {
                *a += b;
            }
            for (i, v) in o.grid {
                g[i] += v;
            }
        }
    }
    BatchResult {
        report: LossReport::from_sums(sums, counts, correct, bits, *weights),
        grad,
        f_agg: all_agg,
    }
}

fn check_compatible(model: &FieldModel, set: &TrainingSet) -> Result<()> {
    if model.arch != set.arch {
        return Err(Error::Config(format!(
            "training set was prepared for {:?} but the model is {:?}",
            set.arch, model.arch
        )));
    }
    model.check_directions(set.dirs.len())
}

/// One optimizer step on `batch` at learning rate `lr`.
pub fn train_step(
    model: &mut FieldModel,
    adam: &mut Adam,
    set: &TrainingSet,
    batch: &[usize],
    weights: &LossWeights,
    lr: f64,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty training batch".into()));
    }
    let res = batch_loss(model, set, batch, weights, None, true);
    if !res.report.total.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss is {} after {} steps (terms {:?})",
            res.report.total,
            adam.steps(),
            res.report.terms()
        )));
    }
    let grad = res.grad.expect("gradient requested");
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of parameter {i} is {}", grad[i])));
    }
    adam.step(&mut model.params, &grad, lr);
    model.check_finite()?;
    Ok(res.report)
}

/// Full training run. Each epoch visits the samples in a seeded permutation; `on_epoch`
/// sees every epoch's averaged report as it completes.
pub fn train(
    model: &mut FieldModel,
    set: &TrainingSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<Vec<EpochReport>> {
    config.validate()?;
    check_compatible(model, set)?;
    if set.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    model.loss_weights = config.weights;
    let mut adam = Adam::new(model.params.len());
    let steps = set.len().div_ceil(config.batch_size);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut reports = Vec::with_capacity(steps);
        for (s, batch) in order.chunks(config.batch_size).enumerate() {
            let lr = lr_at(config, epoch as f64 + s as f64 / steps as f64);
            reports.push(train_step(model, &mut adam, set, batch, &config.weights, lr)?);
        }
        let report = EpochReport {
            epoch,
            lr: lr_at(config, epoch as f64),
            loss: LossReport::merge(&reports),
        };
        log::debug!(
            "epoch {epoch}: total {:.5} accuracy {:.4}",
            report.loss.total,
            report.loss.near_surface_accuracy
        );
        on_epoch(&report);
        history.push(report);
    }
    Ok(history)
}

/// Losses and accuracy of the current model over a whole set, without updating it.
pub fn evaluate(model: &FieldModel, set: &TrainingSet, weights: &LossWeights) -> Result<LossReport> {
    check_compatible(model, set)?;
    let all: Vec<usize> = (0..set.len()).collect();
    Ok(batch_loss(model, set, &all, weights, None, false).report)
}
