//! Step-indexed schedules and patch sampling.

use rand::Rng;

use super::ReconstructionConfig;
use crate::error::{Error, Result};

/// Steps over which disparity noise is active.
pub fn noise_steps(cfg: &ReconstructionConfig) -> usize {
    (cfg.noise_fraction * cfg.iterations as f64).round() as usize
}

/// Log-linear anneal from `noise_start` at step 0 to `noise_end` at the last
/// noisy step, then zero. Falls back to a linear anneal when `noise_end` is 0.
pub fn noise_sigma(step: usize, cfg: &ReconstructionConfig) -> f64 {
    let active = noise_steps(cfg);
    if step >= active || cfg.noise_start == 0.0 {
        return 0.0;
    }
    if active == 1 {
        return cfg.noise_start;
    }
    let t = step as f64 / (active - 1) as f64;
    if step == active - 1 {
        return cfg.noise_end;
    }
    if cfg.noise_end > 0.0 {
        cfg.noise_start * (cfg.noise_end / cfg.noise_start).powf(t)
    } else {
        cfg.noise_start * (1.0 - t)
    }
}

/// Exponential decay from `learning_rate` to `learning_rate · lr_decay`.
pub fn learning_rate(step: usize, cfg: &ReconstructionConfig) -> f64 {
    let t = step as f64 / (cfg.iterations.max(2) - 1) as f64;
    cfg.learning_rate * cfg.lr_decay.powf(t)
}

/// Uniform patch origins `(col, row)`, fully inside a `width`x`height` image.
pub fn sample_patches(
    rng: &mut impl Rng,
    height: usize,
    width: usize,
    patch_size: usize,
    count: usize,
) -> Result<Vec<(usize, usize)>> {
    if patch_size > height.min(width) || patch_size == 0 {
        return Err(Error::Config(format!(
            "patch size {patch_size} does not fit a {width}x{height} image"
        )));
    }
    Ok((0..count)
        .map(|_| {
            (
                rng.random_range(0..=width - patch_size),
                rng.random_range(0..=height - patch_size),
            )
        })
        .collect())
}
