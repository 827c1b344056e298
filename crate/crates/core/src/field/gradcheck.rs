//! Central-difference verification of the hand-written gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::{batch_loss, LossWeights, TrainingSet};
use super::{FieldModel, Layout};
#[cfg(test)]
use super::sigmoid;

/// Gradient magnitudes below this are compared absolutely rather than relatively;
/// central differences cannot resolve them against rounding in the loss.
const RELATIVE_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter index where the maximum occurred.
    pub worst_param: usize,
    pub checked: usize,
    /// Norm of the analytic gradient over the whole parameter vector.
    pub grad_norm: f64,
}

/// Parameters to probe: an even share from every tensor of every head, plus grid entries
/// the batch actually reads. Sorted, without duplicates.
fn pick_params(layout: &Layout, touched_grid: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut blocks: Vec<(usize, usize)> = layout.heads.iter().flat_map(|h| h.blocks()).collect();
    let groups = blocks.len() + 1;
    let per = count.div_ceil(groups);
    let mut out = Vec::with_capacity(per * groups);
    blocks.sort();
    for (off, len) in blocks {
        out.extend(sample(rng, len, per.min(len)).into_iter().map(|i| off + i));
    }
    out.extend(sample(rng, touched_grid.len(), per.min(touched_grid.len())).into_iter().map(|i| touched_grid[i]));
    out.sort_unstable();
    out.dedup();
    // small tensors may not fill their share; top up from everything eligible
    let heads = layout.heads[0].start()..layout.total;
    let pool = heads.len() + touched_grid.len();
    while out.len() < count.min(pool) {
        let i = rand::Rng::random_range(rng, 0..pool);
        let p = if i < heads.len() { heads.start + i } else { touched_grid[i - heads.len()] };
        if let Err(at) = out.binary_search(&p) {
            out.insert(at, p);
        }
    }
    out
}

/// Compares the analytic gradient of the weighted loss over `batch` with central
/// differences of step `h` on at least `count` parameters (fewer only if the model has
/// fewer). The aggregated view features are frozen at their current values for both.
pub fn gradient_check(
    model: &FieldModel,
    set: &TrainingSet,
    batch: &[usize],
    weights: &LossWeights,
    h: f64,
    count: usize,
    seed: u64,
) -> GradCheckReport {
    gradient_check_with(model, set, batch, weights, h, count, seed, |_, _| {})
}

/// As [`gradient_check`], letting `corrupt` tamper with the analytic gradient first.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check_with(
    model: &FieldModel,
    set: &TrainingSet,
    batch: &[usize],
    weights: &LossWeights,
    h: f64,
    count: usize,
    seed: u64,
    corrupt: impl FnOnce(&Layout, &mut [f64]),
) -> GradCheckReport {
    let base = batch_loss(model, set, batch, weights, None, true);
    let frozen = base.f_agg;
    let mut grad = base.grad.expect("gradient requested");
    corrupt(&model.layout, &mut grad);
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();

    let mut touched: Vec<usize> = batch
        .iter()
        .flat_map(|&i| {
            let t = set.samples[i].point.taps;
            t.offsets.into_iter().zip(t.weights).filter(|(_, w)| *w != 0.0).map(|(o, _)| o)
        })
        .flat_map(|o| o..o + model.arch.grid_channels)
        .collect();
    touched.sort_unstable();
    touched.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = pick_params(&model.layout, &touched, count, &mut rng);
    let mut probe = model.clone();
    let mut worst = (0.0f64, 0usize);
    for &p in &picked {
        let orig = probe.params[p];
        probe.params[p] = orig + h;
        let plus = batch_loss(&probe, set, batch, weights, Some(&frozen), false).report.total;
        probe.params[p] = orig - h;
        let minus = batch_loss(&probe, set, batch, weights, Some(&frozen), false).report.total;
        probe.params[p] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = grad[p];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        if err > worst.0 {
            worst = (err, p);
        }
    }
    GradCheckReport {
        max_rel_error: worst.0,
        worst_param: worst.1,
        checked: picked.len(),
        grad_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::fixture;

    #[test]
    fn every_term_matches_finite_differences() {
        let set = fixture::set();
        let model = FieldModel::new(fixture::arch(), 5).unwrap();
        let batch: Vec<usize> = (0..set.len()).step_by(3).collect();
        let mut all = vec![LossWeights::default()];
        all.extend((0..4).map(LossWeights::only));
        for w in all {
            let r = gradient_check(&model, &set, &batch, &w, 1e-5, 200, 11);
            assert!(r.checked >= 200);
            assert!(r.max_rel_error < 1e-3, "{w:?}: {r:?}");
        }
    }

    #[test]
    fn negated_layer_is_caught() {
        let set = fixture::set();
        let model = FieldModel::new(fixture::arch(), 5).unwrap();
        let batch: Vec<usize> = (0..set.len()).collect();
        let r = gradient_check_with(&model, &set, &batch, &LossWeights::default(), 1e-5, 200, 2, |l, g| {
            let h = l.heads[1];
            g[h.weights[2]..h.biases[2]].iter_mut().for_each(|v| *v = -*v);
        });
        assert!(r.max_rel_error > 0.5, "{r:?}");
    }

    #[test]
    fn exact_albedo_targets_give_zero_gradient() {
        let mut set = fixture::set();
        let model = FieldModel::new(fixture::arch(), 8).unwrap();
        let batch: Vec<usize> = (0..set.len()).filter(|&i| set.samples[i].albedo.is_some()).collect();
        assert!(!batch.is_empty());
        let pts: Vec<_> = batch.iter().map(|&i| set.samples[i].point.clone()).collect();
        let out = model.query(&pts, false, true);
        for (r, &i) in batch.iter().enumerate() {
            let z = &out.albedo[r * 3..r * 3 + 3];
            set.samples[i].albedo = Some([sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2])]);
        }
        let r = gradient_check(&model, &set, &batch, &LossWeights::only(3), 1e-5, 200, 4);
        assert!(r.grad_norm < 1e-8, "{r:?}");
    }
}
