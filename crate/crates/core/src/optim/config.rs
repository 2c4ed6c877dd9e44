//! Reconstruction hyperparameters and their flat `key = value` file form.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::loss::{LossWeights, SelectionMode};
use crate::ndf::NdfConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    pub alpha: f64,
    pub beta: f64,
    pub levels: usize,
    pub log2_table_size: u32,
    pub features: usize,
    pub coarse_resolution: usize,
    pub fine_resolution: usize,
    pub mlp_hidden: usize,
    pub hidden_layers: usize,
    pub leaky_slope: f64,
    pub output_scale: f64,
    pub patch_size: usize,
    pub patches_per_step: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Ratio of the final to the initial learning rate.
    pub lr_decay: f64,
    pub noise_start: f64,
    pub noise_end: f64,
    /// Fraction of the iterations over which noise is annealed; zero after.
    pub noise_fraction: f64,
    pub seed: u64,
    pub grayscale: bool,
    pub mssim_window: usize,
    pub mssim_sigma: f64,
    pub charbonnier_eps: f64,
    pub selection: SelectionMode,
    pub log_interval: usize,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            levels: 6,
            log2_table_size: 15,
            features: 2,
            coarse_resolution: 32,
            fine_resolution: 128,
            mlp_hidden: 256,
            hidden_layers: 2,
            leaky_slope: 0.01,
            output_scale: 1.0,
            patch_size: 32,
            patches_per_step: 16,
            iterations: 20_000,
            learning_rate: 1e-2,
            lr_decay: 0.1,
            noise_start: 1.0,
            noise_end: 1e-2,
            noise_fraction: 0.5,
            seed: 0,
            grayscale: false,
            mssim_window: 11,
            mssim_sigma: 1.5,
            charbonnier_eps: 1e-6,
            selection: SelectionMode::Half,
            log_interval: 100,
        }
    }
}

macro_rules! fields {
    ($m:ident) => {
        $m!(
            alpha, beta, levels, log2_table_size, features, coarse_resolution, fine_resolution, mlp_hidden,
            hidden_layers, leaky_slope, output_scale, patch_size, patches_per_step, iterations, learning_rate,
            lr_decay, noise_start, noise_end, noise_fraction, seed, grayscale, mssim_window, mssim_sigma,
            charbonnier_eps, selection, log_interval
        )
    };
}

impl ReconstructionConfig {
    /// Small-scene preset: narrower MLP and fewer, smaller patches so that a
    /// 64² scene trains in well under a minute on one core.
    pub fn desk() -> Self {
        Self {
            mlp_hidden: 64,
            patch_size: 24,
            patches_per_step: 4,
            iterations: 2_000,
            ..Self::default()
        }
    }

    pub fn ndf_config(&self) -> NdfConfig {
        NdfConfig {
            levels: self.levels,
            log2_table_size: self.log2_table_size,
            features: self.features,
            coarse_resolution: self.coarse_resolution,
            fine_resolution: self.fine_resolution,
            hidden_width: self.mlp_hidden,
            hidden_layers: self.hidden_layers,
            leaky_slope: self.leaky_slope,
            output_scale: self.output_scale,
            seed: self.seed,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            mssim_window: self.mssim_window,
            mssim_sigma: self.mssim_sigma,
            charbonnier_eps: self.charbonnier_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.ndf_config().validate()?;
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if self.mssim_window.is_multiple_of(2) || self.mssim_window < 3 {
            return bad(format!("mssim_window {} must be odd and at least 3", self.mssim_window));
        }
        if self.patch_size < self.mssim_window {
            return bad(format!(
                "patch_size {} smaller than mssim_window {}",
                self.patch_size, self.mssim_window
            ));
        }
        if self.patches_per_step < 1 {
            return bad("patches_per_step must be at least 1".into());
        }
        if !(self.noise_start >= self.noise_end && self.noise_end >= 0.0) {
            return bad("need noise_start >= noise_end >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return bad("noise_fraction must lie in [0, 1]".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) || !(self.lr_decay > 0.0) {
            return bad("learning_rate must be finite and >= 0, lr_decay > 0".into());
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and nonnegative"));
            }
        }
        if !(self.mssim_sigma > 0.0) || !(self.charbonnier_eps > 0.0) {
            return bad("mssim_sigma and charbonnier_eps must be positive".into());
        }
        Ok(())
    }

    /// Every field as `key = value` lines, in declaration order.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        macro_rules! emit {
            ($($f:ident),*) => { $( out.push_str(&format!("{} = {}\n", stringify!($f), self.$f)); )* };
        }
        fields!(emit);
        out
    }

    /// Hex SHA-256 of [`ReconstructionConfig::to_kv_string`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_kv_string().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Parse a config file over the defaults. Unknown keys are rejected.
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut cfg = Self::default();
        for e in &kv.entries {
            macro_rules! assign {
                ($($f:ident),*) => {
                    match e.key.as_str() {
                        $( stringify!($f) => cfg.$f = kv.parse_value(e)?, )*
                        other => return Err(kv.error(e, format!("unknown config key `{other}`"))),
                    }
                };
            }
            fields!(assign);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv_string()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_roundtrip() {
        let mut cfg = ReconstructionConfig::desk();
        cfg.alpha = 0.3;
        cfg.selection = SelectionMode::All;
        cfg.grayscale = true;
        let kv = KvFile::parse(Path::new("c"), &cfg.to_kv_string()).unwrap();
        assert_eq!(ReconstructionConfig::from_kv(&kv).unwrap(), cfg);
    }

    #[test]
    fn unknown_and_invalid_keys() {
        let kv = KvFile::parse(Path::new("c"), "alpha = 1\nlearning_rat = 3\n").unwrap();
        let err = ReconstructionConfig::from_kv(&kv).unwrap_err();
        assert!(err.to_string().contains("learning_rat"));
        let kv = KvFile::parse(Path::new("c"), "patch_size = 8\n").unwrap();
        assert!(ReconstructionConfig::from_kv(&kv).is_err());
        let kv = KvFile::parse(Path::new("c"), "noise_start = 0.001\n").unwrap();
        assert!(ReconstructionConfig::from_kv(&kv).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ReconstructionConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
