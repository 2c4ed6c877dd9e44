//! Disparity error statistics and line profiles.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lfdata::DisparityMap;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.01, 0.03, 0.07];

fn check_dims(pred: &DisparityMap, gt: &DisparityMap) -> Result<()> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::Dimension(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    Ok(())
}

/// Residuals at pixels valid in both maps.
fn residuals<'a>(pred: &'a DisparityMap, gt: &'a DisparityMap) -> Result<impl Iterator<Item = f64> + 'a> {
    check_dims(pred, gt)?;
    let valid = pred.valid().iter().zip(gt.valid()).filter(|(a, b)| **a && **b).count();
    if valid == 0 {
        return Err(Error::Dimension("no pixel is valid in both maps".into()));
    }
    Ok(pred
        .values()
        .iter()
        .zip(gt.values())
        .zip(pred.valid().iter().zip(gt.valid()))
        .filter(|(_, (a, b))| **a && **b)
        .map(|((p, g), _)| p - g))
}

/// Percentage of jointly valid pixels whose absolute error exceeds `threshold`.
pub fn badpix(pred: &DisparityMap, gt: &DisparityMap, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("badpix threshold {threshold} must be positive")));
    }
    let (mut bad, mut total) = (0usize, 0usize);
    for r in residuals(pred, gt)? {
        total += 1;
        if r.abs() > threshold {
            bad += 1;
        }
    }
    Ok(100.0 * bad as f64 / total as f64)
}

/// `100 ·` mean squared error over jointly valid pixels.
pub fn mse100(pred: &DisparityMap, gt: &DisparityMap) -> Result<f64> {
    let (mut sum, mut total) = (0.0, 0usize);
    for r in residuals(pred, gt)? {
        sum += r * r;
        total += 1;
    }
    Ok(100.0 * sum / total as f64)
}

/// `(column, value)` along one row.
pub fn profile_line(map: &DisparityMap, row: usize) -> Result<Vec<(usize, f64)>> {
    if row >= map.height() {
        return Err(Error::RowOutOfRange {
            row,
            height: map.height(),
        });
    }
    Ok((0..map.width()).map(|c| (c, map.get(c, row))).collect())
}

pub fn write_profile_csv(profile: &[(usize, f64)], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "column,disparity")?;
    for (c, v) in profile {
        writeln!(out, "{c},{v:e}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BadPixEntry {
    pub threshold: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scene: String,
    pub badpix: Vec<BadPixEntry>,
    pub mse100: f64,
    pub pixel_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl MetricsReport {
    pub fn compute(scene: &str, pred: &DisparityMap, gt: &DisparityMap, thresholds: &[f64]) -> Result<Self> {
        let pixel_count = residuals(pred, gt)?.count();
        let badpix = thresholds
            .iter()
            .map(|&t| {
                Ok(BadPixEntry {
                    threshold: t,
                    percent: badpix(pred, gt, t)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scene: scene.to_string(),
            badpix,
            mse100: mse100(pred, gt)?,
            pixel_count,
            config_hash: None,
        })
    }

    pub fn badpix_at(&self, threshold: f64) -> Option<f64> {
        self.badpix.iter().find(|e| e.threshold == threshold).map(|e| e.percent)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}
