//! The reconstruction loop: sample patches, predict, perturb, warp, select,
//! backpropagate, update.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{adam::AdamState, schedule, ReconstructionConfig};
use crate::error::{Error, Result};
use crate::lfdata::{DisparityMap, LightField};
use crate::loss::{LossWeights, Patch, PatchData, PatchLoss};
use crate::ndf::{NdfGradients, NdfModel, PartialGradients};
use crate::par::{self, Execution};
use crate::warp::{warp_patch, MAX_CHANNELS};

/// Keeps the sampling stream apart from the initialization stream.
const SAMPLER_SALT: u64 = 0x0005_eed0_f5a3_b1e5;

/// The light field as the loss sees it, plus the side-view offsets.
#[derive(Debug, Clone)]
pub struct TrainingViews {
    lf: LightField,
    sides: Vec<(f64, f64)>,
    side_indices: Vec<crate::lfdata::ViewCoordinate>,
}

impl TrainingViews {
    pub fn new(lf: &LightField, grayscale: bool) -> Result<Self> {
        if lf.channels() > MAX_CHANNELS {
            return Err(Error::LightField(format!("{} channels unsupported", lf.channels())));
        }
        let lf = if grayscale { lf.to_gray() } else { lf.clone() };
        let side_indices = lf.side_views();
        let sides = side_indices.iter().map(|&vc| lf.offset(vc)).collect();
        Ok(Self { lf, sides, side_indices })
    }

    pub fn light_field(&self) -> &LightField {
        &self.lf
    }

    /// Normalized coordinates of the pixel centers of a patch, row-major.
    pub fn patch_coordinates(&self, model: &NdfModel, origin: (usize, usize), size: usize) -> Vec<[f64; 2]> {
        (0..size)
            .flat_map(|y| (0..size).map(move |x| (x, y)))
            .map(|(x, y)| model.normalize((origin.0 + x) as f64, (origin.1 + y) as f64))
            .collect()
    }

    /// Center patch and every side view warped with `warp_disparity`.
    pub fn patch_data(
        &self,
        origin: (usize, usize),
        size: usize,
        disparity: Vec<f64>,
        warp_disparity: &[f64],
    ) -> Result<PatchData> {
        let center = self.lf.center_view();
        let center = Patch::from_fn(size, center.channels(), |x, y, c| center.get(origin.0 + x, origin.1 + y, c));
        let warps = self
            .side_indices
            .iter()
            .zip(&self.sides)
            .map(|(&vc, &delta)| Ok(warp_patch(self.lf.view_image(vc)?, delta, origin, size, warp_disparity)))
            .collect::<Result<Vec<_>>>()?;
        Ok(PatchData {
            origin,
            center,
            disparity,
            warps,
        })
    }
}

/// One record of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub step: usize,
    /// Selected-view training loss of the step's batch.
    pub train_loss: f64,
    /// Aggregated-view monitor objective of the same batch.
    pub monitor_loss: f64,
    pub sigma: f64,
    pub learning_rate: f64,
}

impl LogRecord {
    pub const CSV_HEADER: &'static str = "step,train_loss,monitor_loss,sigma,lr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e}",
            self.step, self.train_loss, self.monitor_loss, self.sigma, self.learning_rate
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub loss: f64,
    pub sigma: f64,
    pub learning_rate: f64,
    pub monitor_loss: Option<f64>,
}

pub struct Trainer {
    cfg: ReconstructionConfig,
    weights: LossWeights,
    views: TrainingViews,
    model: NdfModel,
    adam: AdamState,
    rng: ChaCha8Rng,
    exec: Execution,
    step: usize,
}

struct PatchResult {
    /// `None` when the prediction itself is non-finite.
    loss: Option<PatchLoss>,
    monitor: Option<f64>,
    grads: PartialGradients,
}

impl Trainer {
    pub fn new(lf: &LightField, cfg: &ReconstructionConfig) -> Result<Self> {
        cfg.validate()?;
        let views = TrainingViews::new(lf, cfg.grayscale)?;
        if lf.view_count() < 2 {
            return Err(Error::LightField("at least one side view is required".into()));
        }
        if cfg.patch_size > lf.width().min(lf.height()) {
            return Err(Error::Config(format!(
                "patch_size {} exceeds the {}x{} views",
                cfg.patch_size,
                lf.width(),
                lf.height()
            )));
        }
        let model = NdfModel::new(&cfg.ndf_config(), (lf.width(), lf.height()))?;
        Ok(Self::from_model(model, views, cfg))
    }

    /// Continue from an existing model; the domain must match the views.
    pub fn from_model(model: NdfModel, views: TrainingViews, cfg: &ReconstructionConfig) -> Self {
        let adam = AdamState::new(&model.parameters());
        Self {
            weights: cfg.loss_weights(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ SAMPLER_SALT),
            cfg: cfg.clone(),
            views,
            model,
            adam,
            exec: Execution::default(),
            step: 0,
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn model(&self) -> &NdfModel {
        &self.model
    }

    pub fn into_model(self) -> NdfModel {
        self.model
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.adam
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    fn wants_monitor(&self) -> bool {
        let last = self.step + 1 == self.cfg.iterations;
        self.cfg.log_interval > 0 && (self.step.is_multiple_of(self.cfg.log_interval) || last)
    }

    /// Run one optimization step.
    pub fn step(&mut self) -> Result<StepReport> {
        let step = self.step;
        let sigma = schedule::noise_sigma(step, &self.cfg);
        let lr = schedule::learning_rate(step, &self.cfg);
        let size = self.cfg.patch_size;
        let lf = self.views.light_field();
        let origins = schedule::sample_patches(&mut self.rng, lf.height(), lf.width(), size, self.cfg.patches_per_step)?;
        let noise: Vec<Vec<f64>> = origins
            .iter()
            .map(|_| {
                if sigma > 0.0 {
                    (0..size * size)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut self.rng);
                            sigma * z
                        })
                        .collect::<Vec<f64>>()
                } else {
                    Vec::new()
                }
            })
            .collect();
        let monitor = self.wants_monitor();
        let scale = 1.0 / origins.len() as f64;
        let jobs: Vec<usize> = (0..origins.len()).collect();
        let (model, views, weights, cfg) = (&self.model, &self.views, &self.weights, &self.cfg);
        let results = par::map_chunks(self.exec, &jobs, 1, |_, job| -> Result<PatchResult> {
            let k = job[0];
            let xs = views.patch_coordinates(model, origins[k], size);
            let pass = model.forward(&xs);
            if !pass.disparity.iter().all(|d| d.is_finite()) {
                let grads = model.backward(&pass, &vec![0.0; xs.len()])?;
                return Ok(PatchResult {
                    loss: None,
                    monitor: None,
                    grads,
                });
            }
            let mut noisy = pass.disparity.clone();
            for (d, n) in noisy.iter_mut().zip(&noise[k]) {
                *d += n;
            }
            let data = views.patch_data(origins[k], size, pass.disparity.clone(), &noisy)?;
            let loss = data.evaluate(weights, &cfg.selection, None)?;
            let monitor = if monitor {
                Some(data.objective_full(weights, &cfg.selection)?)
            } else {
                None
            };
            let cot: Vec<f64> = loss.cotangent.iter().map(|c| c * scale).collect();
            let grads = model.backward(&pass, &cot)?;
            Ok(PatchResult {
                loss: Some(loss),
                monitor,
                grads,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        let diverged = |what: &str, model: &NdfModel| Error::Divergence {
            step,
            what: what.to_string(),
            param_norm: model.parameter_norm(),
            origins: origins.clone(),
        };
        let losses: Vec<&PatchLoss> = results.iter().filter_map(|r| r.loss.as_ref()).collect();
        if losses.len() < results.len() {
            return Err(diverged("non-finite prediction", &self.model));
        }
        if losses.iter().all(|l| l.selection.is_empty()) {
            return Err(Error::DegenerateBatch);
        }
        let loss = scale * losses.iter().map(|l| l.loss).sum::<f64>();
        let monitor_loss = monitor.then(|| scale * results.iter().filter_map(|r| r.monitor).sum::<f64>());
        if !loss.is_finite() {
            return Err(diverged("non-finite loss", &self.model));
        }
        let partials: Vec<PartialGradients> = results.into_iter().map(|r| r.grads).collect();
        let mut grads = NdfGradients::zeros_like(&self.model);
        grads.accumulate(&partials, self.exec, self.cfg.features);
        if !grads.is_finite() {
            return Err(diverged("non-finite gradient", &self.model));
        }
        let exec = self.exec;
        self.adam.update(exec, self.model.parameters_mut(), grads.slices(), lr);
        if !self.model.is_finite() {
            return Err(diverged("non-finite parameters after update", &self.model));
        }
        self.step += 1;
        Ok(StepReport {
            step,
            loss,
            sigma,
            learning_rate: lr,
            monitor_loss,
        })
    }
}

/// Output of a full run.
#[derive(Debug)]
pub struct Reconstruction {
    pub model: NdfModel,
    /// Rendered at the center-view resolution.
    pub disparity: DisparityMap,
    pub log: Vec<LogRecord>,
    /// Training loss of every step.
    pub losses: Vec<f64>,
}

pub fn reconstruct(lf: &LightField, cfg: &ReconstructionConfig) -> Result<Reconstruction> {
    reconstruct_with(lf, cfg, Execution::default(), |_| {})
}

/// [`reconstruct`] with an explicit execution mode and a per-step callback.
pub fn reconstruct_with(
    lf: &LightField,
    cfg: &ReconstructionConfig,
    exec: Execution,
    mut on_step: impl FnMut(&StepReport),
) -> Result<Reconstruction> {
    let mut trainer = Trainer::new(lf, cfg)?.with_execution(exec);
    let mut log = Vec::new();
    let mut losses = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let r = trainer.step()?;
        losses.push(r.loss);
        if let Some(monitor_loss) = r.monitor_loss {
            log.push(LogRecord {
                step: r.step,
                train_loss: r.loss,
                monitor_loss,
                sigma: r.sigma,
                learning_rate: r.learning_rate,
            });
        }
        on_step(&r);
    }
    let model = trainer.into_model();
    let disparity = model.render_grid_with(exec, lf.height(), lf.width())?;
    Ok(Reconstruction {
        model,
        disparity,
        log,
        losses,
    })
}
