//! The trainable field: a shared spatial encoding (raw position, sin/cos positional
//! encoding and a trilinear feature grid) feeding three residual-MLP heads for
//! visibility logits, occupancy and albedo. Gradients are hand-written.

mod batch;
mod encoding;
mod gradcheck;
mod io;
mod loss;
mod mlp;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::{Error, Result};

pub use batch::{prepare_points, PreparedPoint, QueryOutput};
pub use encoding::{encode, Encoded, GRID_HALF_EXTENT};
pub use gradcheck::{gradient_check, gradient_check_with, GradCheckReport};
pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use loss::{albedo_l1, bce_logits, occupancy_bce, transfer_loss, visibility_bce};
pub use train::{
    evaluate, lr_at, train, train_step, Adam, EpochReport, LossReport, LossWeights, PreparedSample, TrainConfig,
    TrainingSet,
};

/// Layers per head: one input layer followed by residual layers.
pub const HEAD_DEPTH: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    /// Visibility directions `n`.
    pub directions: usize,
    /// Positional-encoding octaves `L`.
    pub octaves: usize,
    /// Feature grid resolution `G` per axis.
    pub grid_resolution: usize,
    pub grid_channels: usize,
    pub hidden: usize,
    /// Channels of the per-view image features.
    pub view_channels: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            directions: 64,
            octaves: 6,
            grid_resolution: 32,
            grid_channels: 16,
            hidden: 128,
            view_channels: 3,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.directions == 0 || self.hidden == 0 || self.view_channels == 0 {
            return Err(Error::Config("directions, hidden width and view channels must be positive".into()));
        }
        if self.grid_resolution < 2 {
            return Err(Error::Config("feature grid needs at least 2 nodes per axis".into()));
        }
        if self.octaves > 20 {
            return Err(Error::Config("more than 20 octaves exceeds f64 resolution".into()));
        }
        Ok(())
    }

    /// Width of the shared encoding: position, positional encoding, grid features.
    pub fn encoding_dim(&self) -> usize {
        3 + 6 * self.octaves + self.grid_channels
    }

    pub fn head_input_dim(&self) -> usize {
        self.encoding_dim() + self.view_channels
    }

    pub fn grid_params(&self) -> usize {
        self.grid_resolution.pow(3) * self.grid_channels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Visibility = 0,
    Occupancy = 1,
    Albedo = 2,
}

/// Offsets of one head's tensors inside the flat parameter vector.
/// Weights are row-major `out × in`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadLayout {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub weights: [usize; HEAD_DEPTH],
    pub biases: [usize; HEAD_DEPTH],
    pub out_weight: usize,
    pub out_bias: usize,
    pub end: usize,
}

impl HeadLayout {
    fn new(start: usize, input: usize, hidden: usize, output: usize) -> Self {
        let mut at = start;
        let mut weights = [0; HEAD_DEPTH];
        let mut biases = [0; HEAD_DEPTH];
        for l in 0..HEAD_DEPTH {
            weights[l] = at;
            at += hidden * if l == 0 { input } else { hidden };
            biases[l] = at;
            at += hidden;
        }
        let out_weight = at;
        at += output * hidden;
        let out_bias = at;
        at += output;
        HeadLayout {
            input,
            hidden,
            output,
            weights,
            biases,
            out_weight,
            out_bias,
            end: at,
        }
    }

    pub fn start(&self) -> usize {
        self.weights[0]
    }

    /// `(offset, len)` of every tensor, weights before biases, in layer order.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for l in 0..HEAD_DEPTH {
            let fan_in = if l == 0 { self.input } else { self.hidden };
            out.push((self.weights[l], self.hidden * fan_in));
            out.push((self.biases[l], self.hidden));
        }
        out.push((self.out_weight, self.output * self.hidden));
        out.push((self.out_bias, self.output));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub grid: (usize, usize),
    pub heads: [HeadLayout; 3],
    pub total: usize,
}

impl Layout {
    pub fn new(arch: &Architecture) -> Self {
        let grid_len = arch.grid_params();
        let inp = arch.head_input_dim();
        let vis = HeadLayout::new(grid_len, inp, arch.hidden, arch.directions);
        let occ = HeadLayout::new(vis.end, inp, arch.hidden, 1);
        let alb = HeadLayout::new(occ.end, inp, arch.hidden, 3);
        Layout {
            grid: (0, grid_len),
            heads: [vis, occ, alb],
            total: alb.end,
        }
    }

    pub fn head(&self, h: Head) -> &HeadLayout {
        &self.heads[h as usize]
    }
}

/// Architecture plus flat `f64` parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldModel {
    pub arch: Architecture,
    pub layout: Layout,
    pub params: Vec<f64>,
    pub seed: u64,
    /// Loss weights the model was trained with (recorded in the model file).
    pub loss_weights: LossWeights,
    /// Free-form provenance (tool version, config hash) stored in the model file.
    pub provenance: String,
}

impl FieldModel {
    /// Random initialization: small Gaussian grid features, He-scaled input layers,
    /// down-scaled residual branches and a small output layer.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fill = |slice: &mut [f64], std: f64, rng: &mut ChaCha8Rng| {
            let d = Normal::new(0.0, std).expect("positive std");
            for p in slice {
                *p = d.sample(rng);
            }
        };
        fill(&mut params[layout.grid.0..layout.grid.1], 1e-2, &mut rng);
        for head in &layout.heads {
            let h = head.hidden as f64;
            for l in 0..HEAD_DEPTH {
                let fan_in = if l == 0 { head.input } else { head.hidden };
                let std = if l == 0 { (2.0 / fan_in as f64).sqrt() } else { 0.5 / h.sqrt() };
                let start = head.weights[l];
                fill(&mut params[start..start + head.hidden * fan_in], std, &mut rng);
            }
            let start = head.out_weight;
            fill(&mut params[start..start + head.output * head.hidden], 1.0 / h.sqrt(), &mut rng);
        }
        Ok(FieldModel {
            arch,
            layout,
            params,
            seed,
            loss_weights: LossWeights::default(),
            provenance: String::new(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Zeroes every head's output layer, making all predictions exactly 0.5.
    pub fn zero_output_layers(&mut self) {
        for head in self.layout.heads {
            self.params[head.out_weight..head.end].iter_mut().for_each(|p| *p = 0.0);
        }
    }

    pub fn check_directions(&self, n: usize) -> Result<()> {
        if n != self.arch.directions {
            return Err(Error::Config(format!(
                "model predicts {} directions but the direction set has {n}",
                self.arch.directions
            )));
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.params.iter().position(|p| !p.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("parameter {i} is {}", self.params[i]))),
            None => Ok(()),
        }
    }

    fn head_inputs(&self, points: &[Vec3], feats: &[f64]) -> Vec<f64> {
        let e = self.arch.encoding_dim();
        let cv = self.arch.view_channels;
        let mut out = Vec::with_capacity(points.len() * (e + cv));
        for (i, &p) in points.iter().enumerate() {
            out.extend(encode(self, p).values);
            out.extend_from_slice(&feats[i * cv..(i + 1) * cv]);
        }
        out
    }

    /// Raw outputs of `head` for a batch; `feats` holds `view_channels` values per point.
    pub fn head_logits(&self, head: Head, points: &[Vec3], feats: &[f64]) -> Vec<f64> {
        assert_eq!(feats.len(), points.len() * self.arch.view_channels);
        let input = self.head_inputs(points, feats);
        mlp::forward(&self.params, self.layout.head(head), &input, points.len()).out
    }

    /// Sigmoid visibility over the `n` directions, given the unweighted view-feature mean.
    pub fn forward_visibility(&self, x: Vec3, f_avg: &[f64]) -> Vec<f64> {
        self.head_logits(Head::Visibility, &[x], f_avg).into_iter().map(sigmoid).collect()
    }

    pub fn forward_occupancy(&self, x: Vec3, f_agg: &[f64]) -> f64 {
        sigmoid(self.head_logits(Head::Occupancy, &[x], f_agg)[0])
    }

    pub fn forward_albedo(&self, x: Vec3, f_agg: &[f64]) -> [f64; 3] {
        let z = self.head_logits(Head::Albedo, &[x], f_agg);
        [sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2])]
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
