//! End-to-end finite-difference check of the training-loss gradient.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::{schedule, trainer::TrainingViews, ReconstructionConfig};
use crate::error::Result;
use crate::lfdata::{Image, LightField};
use crate::loss::{tv_with_grad, LossWeights, ViewSelection};
use crate::ndf::{NdfGradients, NdfModel, ParamGroup};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub epsilon: f64,
    /// When false only the β·TV term is differentiated.
    pub photometric: bool,
    /// Disparity at the domain centre of the re-drawn model.
    pub base_disparity: f64,
    /// Offset side-view intensities so the L1 term has no kink in reach.
    pub separate_exposures: bool,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            photometric: true,
            base_disparity: 0.5,
            separate_exposures: true,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupError {
    pub max_rel_error: f64,
    pub count: usize,
    /// (slice, element) of the worst entry.
    pub worst: (usize, usize),
    /// Analytic and numeric gradient at the worst entry.
    pub worst_values: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: BTreeMap<ParamGroup, GroupError>,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Smallest |pre-activation| seen at the base point.
    pub activation_margin: f64,
    /// Gradient differences below this are indistinguishable from round-off.
    pub roundoff: f64,
    pub loss: f64,
}

/// Compare the analytic gradient of the batch training loss against central
/// differences over every parameter.
///
/// The model parameters are re-drawn so that every hidden pre-activation sits
/// well away from the LeakyReLU kink and the output is a plane within
/// `base_disparity ± 0.15`. With `base_disparity` in the middle of a pixel,
/// unit-offset views never sample across a bilinear cell edge during the
/// perturbation. View selection is held fixed at the base point.
///
/// Relative error is `max(|a − n| − r, 0) / max(|a|, |n|, 1e-7·max|n|)`,
/// where `r` bounds the round-off of a central difference of the loss (see
/// [`roundoff_bound`]). Entries whose exact gradient is zero would otherwise
/// report pure round-off as error.
pub fn grad_check(lf: &LightField, cfg: &ReconstructionConfig, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    cfg.validate()?;
    let lf = if opts.separate_exposures {
        separate_exposures(lf)?
    } else {
        lf.clone()
    };
    let views = TrainingViews::new(&lf, cfg.grayscale)?;
    let mut model = NdfModel::new(&cfg.ndf_config(), (lf.width(), lf.height()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    smooth_region_parameters(&mut model, &mut rng, opts.base_disparity)?;
    let origins = schedule::sample_patches(&mut rng, lf.height(), lf.width(), cfg.patch_size, cfg.patches_per_step)?;
    let probe = Probe {
        views: &views,
        origins: &origins,
        size: cfg.patch_size,
        weights: cfg.loss_weights(),
        cfg,
        photometric: opts.photometric,
    };

    let (loss, selections, grads, margin) = probe.analytic(&model)?;
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
    let groups_of = model.parameter_groups();

    let mut numeric: Vec<Vec<f64>> = analytic.iter().map(|s| vec![0.0; s.len()]).collect();
    for (s, slot) in numeric.iter_mut().enumerate() {
        for (i, n) in slot.iter_mut().enumerate() {
            let base = model.parameters()[s][i];
            model.parameters_mut()[s][i] = base + opts.epsilon;
            let plus = probe.loss(&model, &selections)?;
            model.parameters_mut()[s][i] = base - opts.epsilon;
            let minus = probe.loss(&model, &selections)?;
            model.parameters_mut()[s][i] = base;
            *n = (plus - minus) / (2.0 * opts.epsilon);
        }
    }

    let scale = numeric.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-7 * scale;
    let resolution = roundoff_bound(loss, opts.epsilon);
    let mut groups: BTreeMap<ParamGroup, GroupError> = BTreeMap::new();
    let mut checked = 0;
    for (s, (a_slice, n_slice)) in analytic.iter().zip(&numeric).enumerate() {
        let entry = groups.entry(groups_of[s]).or_insert(GroupError {
            max_rel_error: 0.0,
            count: 0,
            worst: (s, 0),
            worst_values: (0.0, 0.0),
        });
        for (i, (&a, &n)) in a_slice.iter().zip(n_slice).enumerate() {
            let denom = a.abs().max(n.abs()).max(floor);
            let excess = ((a - n).abs() - resolution).max(0.0);
            let rel = if denom == 0.0 { 0.0 } else { excess / denom };
            entry.count += 1;
            checked += 1;
            if rel > entry.max_rel_error || rel.is_nan() {
                entry.max_rel_error = rel;
                entry.worst = (s, i);
                entry.worst_values = (a, n);
            }
        }
    }
    let max_rel_error = groups.values().fold(0.0f64, |m, g| m.max(g.max_rel_error));
    Ok(GradCheckReport {
        groups,
        max_rel_error,
        checked,
        activation_margin: margin,
        roundoff: resolution,
        loss,
    })
}

/// Re-draw the parameters so the loss is evaluated on smooth branches only.
///
/// Dense-level features hold the coordinate ramps `(2x − 1, 2y − 1)` and
/// hashed-level features are small noise. Each hidden bias is placed so that
/// the unit's pre-activation over every pixel centre stays at least 0.5 from
/// zero, which makes the hidden output affine in the encoding. The output
/// layer is solved so the ramps contribute `0.075·((2x − 1) + (2y − 1))`
/// around `base`. A draw is accepted when the rendered disparity stays within
/// `base ± 0.17`, every neighbouring difference exceeds 0.003 in magnitude and
/// no output weight exceeds 1.
fn smooth_region_parameters(model: &mut NdfModel, rng: &mut impl Rng, base: f64) -> Result<()> {
    const SLOPE: f64 = 0.075;
    const NOISE: f64 = 0.01;
    let f = model.config.features;
    let width = model.encoding_width();
    // Encodings of the origin and of a unit step along each ramp.
    let mut probes = Array2::<f64>::zeros((3, width));
    for (l, level) in model.levels.iter().enumerate() {
        if level.is_dense() {
            probes[[1, l * f]] = 1.0;
            if f > 1 {
                probes[[2, l * f + 1]] = 1.0;
            }
        }
    }
    let (w, h) = model.domain;
    for _ in 0..256 {
        for level in &mut model.levels {
            let dense = level.is_dense();
            let n = level.resolution;
            let table = level.table_mut();
            if dense {
                table.iter_mut().for_each(|v| *v = 0.0);
                for cy in 0..=n {
                    for cx in 0..=n {
                        let s = (cy * (n + 1) + cx) * f;
                        table[s] = 2.0 * cx as f64 / n as f64 - 1.0;
                        if f > 1 {
                            table[s + 1] = 2.0 * cy as f64 / n as f64 - 1.0;
                        }
                    }
                }
            } else {
                table.iter_mut().for_each(|v| *v = rng.random_range(-NOISE..NOISE));
            }
        }
        let n = model.mlp.layers.len();
        let encoded = encode_domain(model);
        for k in 0..n - 1 {
            let layer = &mut model.mlp.layers[k];
            let bound = 2.0 / layer.weight.nrows() as f64;
            layer.weight.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
            layer.bias.fill(0.0);
            // Centre each unit's pre-activation range, then push it 0.5 past zero.
            let (_, cache) = model.mlp.forward(encoded.view());
            let pre = &cache.pre_activations()[k];
            let mut bias = Vec::with_capacity(pre.ncols());
            for unit in pre.columns() {
                let lo = unit.iter().fold(f64::INFINITY, |m, &v| m.min(v));
                let hi = unit.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let lift = 0.5 * (hi - lo) + 0.5;
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                bias.push(sign * lift - 0.5 * (hi + lo));
            }
            model.mlp.layers[k].bias.iter_mut().zip(bias).for_each(|(b, v)| *b = v);
        }
        let (_, cache) = model.mlp.forward(probes.view());
        let slope = model.mlp.leaky_slope;
        let pre = cache.pre_activations().last().expect("hidden layer");
        let hidden: Vec<Vec<f64>> = pre
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&v| if v < 0.0 { slope * v } else { v }).collect())
            .collect();
        let px: Vec<f64> = hidden[1].iter().zip(&hidden[0]).map(|(a, b)| a - b).collect();
        let py: Vec<f64> = hidden[2].iter().zip(&hidden[0]).map(|(a, b)| a - b).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let (gxx, gxy, gyy) = (dot(&px, &px), dot(&px, &py), dot(&py, &py));
        let det = gxx * gyy - gxy * gxy;
        if !(det > 1e-6 * gxx * gyy) {
            continue;
        }
        let scale = model.config.output_scale;
        let target = SLOPE / scale;
        let a = target * (gyy - gxy) / det;
        let b = target * (gxx - gxy) / det;
        let out = model.mlp.layers.last_mut().expect("output layer");
        for (k, w) in out.weight.iter_mut().enumerate() {
            *w = a * px[k] + b * py[k];
        }
        let w_out: Vec<f64> = out.weight.iter().copied().collect();
        out.bias[0] = base / scale - dot(&hidden[0], &w_out);

        let d = model.render_grid_with(Execution::Sequential, h, w)?;
        let in_range = d.values().iter().all(|v| (v - base).abs() <= 0.17);
        let mut min_step = f64::INFINITY;
        for row in 0..h {
            for col in 0..w {
                if col + 1 < w {
                    min_step = min_step.min((d.get(col + 1, row) - d.get(col, row)).abs());
                }
                if row + 1 < h {
                    min_step = min_step.min((d.get(col, row + 1) - d.get(col, row)).abs());
                }
            }
        }
        let (_, cache) = model.mlp.forward(encoded.view());
        let margin = cache
            .pre_activations()
            .iter()
            .flat_map(|p| p.iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let out_bound = model.mlp.layers[n - 1].weight.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        if in_range && min_step > 0.003 && margin > 0.49 && out_bound <= 1.0 {
            return Ok(());
        }
    }
    Err(crate::Error::Config("could not draw a smooth parameterization".into()))
}

/// Encodings of every pixel centre of the model domain.
fn encode_domain(model: &NdfModel) -> Array2<f64> {
    let (w, h) = model.domain;
    let mut out = Array2::zeros((w * h, model.encoding_width()));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let e = model.encode(model.normalize((i % w) as f64, (i / w) as f64));
        row.iter_mut().zip(e).for_each(|(r, v)| *r = v);
    }
    out
}

/// Smallest gradient difference a central difference of step `epsilon` can
/// resolve on a loss of this magnitude. Every loss term is nonnegative, so
/// `|loss|` bounds the summed term magnitudes; the factor 64 covers the
/// depth of the accumulation.
pub fn roundoff_bound(loss: f64, epsilon: f64) -> f64 {
    64.0 * f64::EPSILON * loss.abs() / epsilon
}

/// Center view mapped to [0.05, 0.35] and side views to [0.55, 0.85]: every
/// warped-minus-center difference stays at least 0.2 from zero.
fn separate_exposures(lf: &LightField) -> Result<LightField> {
    let center = lf.center();
    let views = lf
        .coordinates()
        .map(|vc| {
            let img = lf.view_image(vc)?;
            let lift = if vc == center { 0.05 } else { 0.55 };
            Image::new(
                img.width(),
                img.height(),
                img.channels(),
                img.data().iter().map(|v| lift + 0.3 * v).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    LightField::new(views, lf.grid_rows(), lf.grid_cols())
}

struct Probe<'a> {
    views: &'a TrainingViews,
    origins: &'a [(usize, usize)],
    size: usize,
    weights: LossWeights,
    cfg: &'a ReconstructionConfig,
    photometric: bool,
}

impl Probe<'_> {
    fn tv_weight(&self) -> f64 {
        if self.weights.beta == 0.0 && !self.photometric {
            1.0
        } else {
            self.weights.beta
        }
    }

    /// Loss and per-pixel cotangent of one patch.
    fn patch(
        &self,
        model: &NdfModel,
        k: usize,
        frozen: Option<&ViewSelection>,
    ) -> Result<(f64, Vec<f64>, Option<ViewSelection>, crate::ndf::ForwardPass)> {
        let xs = self.views.patch_coordinates(model, self.origins[k], self.size);
        let pass = model.forward(&xs);
        if !self.photometric {
            let mut cot = vec![0.0; xs.len()];
            let beta = self.tv_weight();
            let tv = tv_with_grad(
                &pass.disparity,
                self.size,
                self.size,
                self.weights.charbonnier_eps,
                Some((&mut cot, beta)),
            );
            return Ok((beta * tv, cot, None, pass));
        }
        let data = self
            .views
            .patch_data(self.origins[k], self.size, pass.disparity.clone(), &pass.disparity)?;
        let r = data.evaluate(&self.weights, &self.cfg.selection, frozen)?;
        Ok((r.loss, r.cotangent, Some(r.selection), pass))
    }

    fn analytic(&self, model: &NdfModel) -> Result<(f64, Vec<Option<ViewSelection>>, NdfGradients, f64)> {
        let k = 1.0 / self.origins.len() as f64;
        let mut loss = 0.0;
        let mut selections = Vec::new();
        let mut partials = Vec::new();
        let mut margin = f64::INFINITY;
        for p in 0..self.origins.len() {
            let (l, cot, sel, pass) = self.patch(model, p, None)?;
            for pre in pass.mlp_cache().pre_activations() {
                margin = pre.iter().fold(margin, |m, v| m.min(v.abs()));
            }
            loss += k * l;
            let cot: Vec<f64> = cot.iter().map(|c| c * k).collect();
            partials.push(model.backward(&pass, &cot)?);
            selections.push(sel);
        }
        let mut grads = NdfGradients::zeros_like(model);
        grads.accumulate(&partials, Execution::Sequential, model.config.features);
        Ok((loss, selections, grads, margin))
    }

    fn loss(&self, model: &NdfModel, selections: &[Option<ViewSelection>]) -> Result<f64> {
        let k = 1.0 / self.origins.len() as f64;
        let mut loss = 0.0;
        for (p, sel) in selections.iter().enumerate() {
            loss += k * self.patch(model, p, sel.as_ref())?.0;
        }
        Ok(loss)
    }
}
