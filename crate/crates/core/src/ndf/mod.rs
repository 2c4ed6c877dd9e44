//! The neural disparity field: hash-grid encoder plus MLP, mapping
//! normalized center-view coordinates to disparity.

mod checkpoint;
mod hashgrid;
mod mlp;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use hashgrid::{level_resolutions, Corners, HashGridLevel};
pub use mlp::{DenseLayer, Mlp, MlpCache};

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lfdata::DisparityMap;
use crate::par::{self, Execution};

/// Points per chunk for batched evaluation. Fixed so that reductions do not
/// depend on the thread count.
pub const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdfConfig {
    pub levels: usize,
    pub log2_table_size: u32,
    pub features: usize,
    pub coarse_resolution: usize,
    pub fine_resolution: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub leaky_slope: f64,
    pub output_scale: f64,
    pub seed: u64,
}

impl Default for NdfConfig {
    fn default() -> Self {
        Self {
            levels: 6,
            log2_table_size: 15,
            features: 2,
            coarse_resolution: 32,
            fine_resolution: 128,
            hidden_width: 256,
            hidden_layers: 2,
            leaky_slope: 0.01,
            output_scale: 1.0,
            seed: 0,
        }
    }
}

impl NdfConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.levels < 1 {
            return bad("levels must be at least 1");
        }
        if self.coarse_resolution < 1 || self.fine_resolution < self.coarse_resolution {
            return bad("resolutions must be positive and non-decreasing");
        }
        if !(1..=28).contains(&self.log2_table_size) {
            return bad("log2_table_size must be in 1..=28");
        }
        if self.features < 1 || self.hidden_width < 1 {
            return bad("features and hidden_width must be positive");
        }
        if !self.leaky_slope.is_finite() || !self.output_scale.is_finite() || self.output_scale == 0.0 {
            return bad("leaky_slope and output_scale must be finite, output_scale nonzero");
        }
        Ok(())
    }

    /// Closed-form trainable scalar count.
    pub fn param_count(&self) -> usize {
        let table = self.levels * (1usize << self.log2_table_size) * self.features;
        let mut widths = vec![self.levels * self.features];
        widths.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        widths.push(1);
        table + widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>()
    }
}

/// The trainable field `F_Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NdfModel {
    pub config: NdfConfig,
    pub levels: Vec<HashGridLevel>,
    pub mlp: Mlp,
    /// Reference `(width, height)` whose pixel centers map into `[0,1]²`.
    pub domain: (usize, usize),
}

/// Which part of the model a parameter slice belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    HashFeatures,
    MlpWeights,
    MlpBiases,
}

/// Forward intermediates for one batch.
#[derive(Debug)]
pub struct ForwardPass {
    pub disparity: Vec<f64>,
    corners: Vec<Corners>,
    mlp: MlpCache,
}

impl ForwardPass {
    pub fn mlp_cache(&self) -> &MlpCache {
        &self.mlp
    }
}

/// Gradients of one batch before the hash-table scatter.
#[derive(Debug)]
pub struct PartialGradients {
    layers: Vec<DenseLayer>,
    features: Array2<f64>,
    corners: Vec<Corners>,
}

/// Dense gradients, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NdfGradients {
    pub tables: Vec<Vec<f64>>,
    pub layers: Vec<DenseLayer>,
}

impl NdfGradients {
    pub fn zeros_like(model: &NdfModel) -> Self {
        Self {
            tables: model.levels.iter().map(|l| vec![0.0; l.table().len()]).collect(),
            layers: model
                .mlp
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    /// Fold partial results in order; the scatter runs one level per task.
    pub fn accumulate(&mut self, partials: &[PartialGradients], exec: Execution, features: usize) {
        for p in partials {
            for (acc, g) in self.layers.iter_mut().zip(&p.layers) {
                acc.weight += &g.weight;
                acc.bias += &g.bias;
            }
        }
        let levels = self.tables.len();
        par::for_each_mut(exec, &mut self.tables, |level, table| {
            let mut g = vec![0.0; features];
            for p in partials {
                for (point, row) in p.features.rows().into_iter().enumerate() {
                    for (f, v) in g.iter_mut().enumerate() {
                        *v = row[level * features + f];
                    }
                    hashgrid::scatter(table, features, &p.corners[point * levels + level], &g);
                }
            }
        });
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.tables.iter().map(Vec::as_slice).collect();
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn scale(&mut self, k: f64) {
        self.tables.iter_mut().flatten().for_each(|g| *g *= k);
        for l in &mut self.layers {
            l.weight *= k;
            l.bias *= k;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl NdfModel {
    pub fn new(config: &NdfConfig, domain: (usize, usize)) -> Result<Self> {
        config.validate()?;
        if domain.0 == 0 || domain.1 == 0 {
            return Err(Error::Config("model domain must be nonempty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let table_size = 1usize << config.log2_table_size;
        let levels = level_resolutions(config.levels, config.coarse_resolution, config.fine_resolution)
            .into_iter()
            .enumerate()
            .map(|(i, n)| HashGridLevel::new(i, n, table_size, config.features, &mut rng))
            .collect();
        let mlp = Mlp::new(
            config.levels * config.features,
            config.hidden_width,
            config.hidden_layers,
            config.leaky_slope,
            &mut rng,
        );
        Ok(Self {
            config: config.clone(),
            levels,
            mlp,
            domain,
        })
    }

    pub fn param_count(&self) -> usize {
        self.levels.iter().map(|l| l.table().len()).sum::<usize>() + self.mlp.param_count()
    }

    pub fn encoding_width(&self) -> usize {
        self.levels.len() * self.config.features
    }

    /// Normalized coordinate of a reference-image pixel center.
    pub fn normalize(&self, col: f64, row: f64) -> [f64; 2] {
        [(col + 0.5) / self.domain.0 as f64, (row + 0.5) / self.domain.1 as f64]
    }

    /// Concatenated per-level features at `x`.
    pub fn encode(&self, x: [f64; 2]) -> Vec<f64> {
        let f = self.config.features;
        let mut out = vec![0.0; self.encoding_width()];
        for (level, chunk) in self.levels.iter().zip(out.chunks_mut(f)) {
            level.gather(&level.corners(x), chunk);
        }
        out
    }

    /// Single-threaded forward pass keeping what the backward pass needs.
    pub fn forward(&self, xs: &[[f64; 2]]) -> ForwardPass {
        let f = self.config.features;
        let width = self.encoding_width();
        let mut encoded = Array2::zeros((xs.len(), width));
        let mut corners = Vec::with_capacity(xs.len() * self.levels.len());
        for (x, mut row) in xs.iter().zip(encoded.rows_mut()) {
            let row = row.as_slice_mut().expect("standard layout");
            for (level, chunk) in self.levels.iter().zip(row.chunks_mut(f)) {
                let c = level.corners(*x);
                level.gather(&c, chunk);
                corners.push(c);
            }
        }
        let (y, mlp) = self.mlp.forward(encoded.view());
        let scale = self.config.output_scale;
        ForwardPass {
            disparity: y.iter().map(|v| scale * v).collect(),
            corners,
            mlp,
        }
    }

    /// Gradients of `Σ cot_i · d̂(x_i)` for the batch behind `pass`.
    pub fn backward(&self, pass: &ForwardPass, cot: &[f64]) -> Result<PartialGradients> {
        if cot.len() != pass.disparity.len() {
            return Err(Error::Dimension(format!(
                "cotangent of length {} for a batch of {}",
                cot.len(),
                pass.disparity.len()
            )));
        }
        let g = ArrayView1::from(cot).mapv(|c| c * self.config.output_scale);
        let (layers, features) = self.mlp.backward(&pass.mlp, g.view());
        Ok(PartialGradients {
            layers,
            features,
            corners: pass.corners.clone(),
        })
    }

    pub fn predict(&self, xs: &[[f64; 2]]) -> Vec<f64> {
        self.predict_with(Execution::default(), xs)
    }

    pub fn predict_with(&self, exec: Execution, xs: &[[f64; 2]]) -> Vec<f64> {
        par::map_chunks(exec, xs, CHUNK, |_, chunk| self.forward(chunk).disparity)
            .into_iter()
            .flatten()
            .collect()
    }

    /// Exact reverse-mode gradients of `Σ cot_i · d̂(x_i)`.
    pub fn model_backward(&self, xs: &[[f64; 2]], cot: &[f64]) -> Result<NdfGradients> {
        self.model_backward_with(Execution::default(), xs, cot)
    }

    pub fn model_backward_with(&self, exec: Execution, xs: &[[f64; 2]], cot: &[f64]) -> Result<NdfGradients> {
        if cot.len() != xs.len() {
            return Err(Error::Dimension(format!(
                "cotangent of length {} for a batch of {}",
                cot.len(),
                xs.len()
            )));
        }
        let partials = par::map_chunks(exec, xs, CHUNK, |i, chunk| {
            let pass = self.forward(chunk);
            self.backward(&pass, &cot[i * CHUNK..i * CHUNK + chunk.len()])
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mut grads = NdfGradients::zeros_like(self);
        grads.accumulate(&partials, exec, self.config.features);
        Ok(grads)
    }

    /// Evaluate at the pixel centers of an `out_w`x`out_h` grid over the domain.
    pub fn render_grid(&self, out_h: usize, out_w: usize) -> Result<DisparityMap> {
        self.render_grid_with(Execution::default(), out_h, out_w)
    }

    pub fn render_grid_with(&self, exec: Execution, out_h: usize, out_w: usize) -> Result<DisparityMap> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::Dimension("render size must be at least 1x1".into()));
        }
        let xs: Vec<[f64; 2]> = (0..out_h)
            .flat_map(|j| {
                (0..out_w).map(move |i| [(i as f64 + 0.5) / out_w as f64, (j as f64 + 0.5) / out_h as f64])
            })
            .collect();
        DisparityMap::new(out_w, out_h, self.predict_with(exec, &xs))
    }

    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.levels.iter().map(HashGridLevel::table).collect();
        for l in &self.mlp.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.levels.iter_mut().map(HashGridLevel::table_mut).collect();
        for l in &mut self.mlp.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Group of each slice returned by [`NdfModel::parameters`].
    pub fn parameter_groups(&self) -> Vec<ParamGroup> {
        let mut out = vec![ParamGroup::HashFeatures; self.levels.len()];
        for _ in &self.mlp.layers {
            out.push(ParamGroup::MlpWeights);
            out.push(ParamGroup::MlpBiases);
        }
        out
    }

    pub fn parameter_norm(&self) -> f64 {
        self.parameters()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}
