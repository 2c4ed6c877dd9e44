//! Per-scene optimization of a disparity field against a light field.

mod adam;
mod config;
mod gradcheck;
mod schedule;
mod trainer;

pub use adam::AdamState;
pub use config::ReconstructionConfig;
pub use gradcheck::{grad_check, roundoff_bound, GradCheckOptions, GradCheckReport, GroupError};
pub use schedule::{learning_rate, noise_sigma, noise_steps, sample_patches};
pub use trainer::{reconstruct, reconstruct_with, LogRecord, Reconstruction, StepReport, Trainer, TrainingViews};
