//! Neural disparity fields: per-scene reconstruction of a continuous
//! disparity function from a 4D light field.
//!
//! A multiresolution hash-grid encoder feeds a small MLP that maps
//! center-view coordinates to disparity. Training warps every side view onto
//! the center view through the predicted disparity, keeps the better-matching
//! half of the views per pixel and backpropagates an L1 + SSIM + TV loss.

pub mod cli;
pub mod error;
pub mod kv;
pub mod lfdata;
pub mod loss;
pub mod metrics;
pub mod ndf;
pub mod optim;
pub mod par;
pub mod warp;

pub use error::{Error, Result};
