use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::nets::ArchConfig;
use super::optim::MultiStepLr;
use crate::error::{Error, Result};
use crate::losses::FeatureTap;
use crate::scalarize::{
    ScalarizationMode, UpperBounds, DEFAULT_EPS, MU_FEATURE, MU_GAN_RELATIVISTIC, MU_GAN_STANDARD, MU_PIXEL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialVariant {
    Standard,
    #[default]
    Relativistic,
}

impl AdversarialVariant {
    /// Default upper bounds `[gan, pixel, feature]`.
    pub fn default_mu(self) -> [f64; 3] {
        let gan = match self {
            AdversarialVariant::Standard => MU_GAN_STANDARD,
            AdversarialVariant::Relativistic => MU_GAN_RELATIVISTIC,
        };
        [gan, MU_PIXEL, MU_FEATURE]
    }
}

/// Training configuration. Unknown keys are rejected when parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: ScalarizationMode,
    /// Upper bounds `[gan, pixel, feature]`; derived from the adversarial
    /// variant when absent.
    #[serde(default)]
    pub mu: Option<[f64; 3]>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub adversarial: AdversarialVariant,
    #[serde(default = "default_norm_p")]
    pub norm_p: u32,
    #[serde(default = "default_pretrain_iters")]
    pub pretrain_iters: usize,
    #[serde(default = "default_adversarial_iters")]
    pub adversarial_iters: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Learning rate of the pixel-loss pretraining phase.
    #[serde(default = "default_pretrain_lr")]
    pub pretrain_lr: f64,
    #[serde(default = "default_milestones")]
    pub lr_milestones: Vec<usize>,
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_baseline_weights")]
    pub baseline_weights: [f64; 3],
    #[serde(default)]
    pub eval_list: Vec<PathBuf>,
    #[serde(default)]
    pub arch: ArchConfig,
    #[serde(default)]
    pub feature_tap: FeatureTap,
}

fn default_mode() -> ScalarizationMode {
    ScalarizationMode::HypervolLog
}
fn default_eps() -> f64 {
    DEFAULT_EPS
}
fn default_norm_p() -> u32 {
    1
}
fn default_pretrain_iters() -> usize {
    2000
}
fn default_adversarial_iters() -> usize {
    1000
}
fn default_batch_size() -> usize {
    4
}
fn default_patch_size() -> usize {
    48
}
fn default_lr() -> f64 {
    1e-4
}
fn default_pretrain_lr() -> f64 {
    1e-3
}
fn default_milestones() -> Vec<usize> {
    vec![500]
}
fn default_baseline_weights() -> [f64; 3] {
    [0.005, 0.01, 1.0]
}

impl TrainConfig {
    /// A config with every default and the given paths.
    pub fn with_paths(dataset: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed: 0,
            mode: default_mode(),
            mu: None,
            eps: default_eps(),
            adversarial: AdversarialVariant::default(),
            norm_p: default_norm_p(),
            pretrain_iters: default_pretrain_iters(),
            adversarial_iters: default_adversarial_iters(),
            batch_size: default_batch_size(),
            patch_size: default_patch_size(),
            lr: default_lr(),
            pretrain_lr: default_pretrain_lr(),
            lr_milestones: default_milestones(),
            dataset: dataset.into(),
            output_dir: output_dir.into(),
            baseline_weights: default_baseline_weights(),
            eval_list: Vec::new(),
            arch: ArchConfig::default(),
            feature_tap: FeatureTap::default(),
        }
    }

    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("config: {msg}")));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.patch_size == 0 || self.patch_size % crate::data_io::SCALE != 0 {
            return bad(format!("patch_size {} must be a positive multiple of 4", self.patch_size));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.norm_p != 1 && self.norm_p != 2 {
            return bad(format!("norm_p must be 1 or 2, got {}", self.norm_p));
        }
        MultiStepLr::new(self.pretrain_lr, vec![])?;
        MultiStepLr::new(self.lr, self.lr_milestones.clone())?;
        UpperBounds::new(self.mu_values().to_vec())?;
        if self.baseline_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("baseline_weights must be finite and nonnegative".into());
        }
        if let ScalarizationMode::LinearFixed(w) = &self.mode {
            if w.len() != 3 || w.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return bad("linear_fixed mode needs three finite nonnegative weights".into());
            }
        }
        self.arch.validate()
    }

    pub fn mu_values(&self) -> [f64; 3] {
        self.mu.unwrap_or_else(|| self.adversarial.default_mu())
    }

    pub fn upper_bounds(&self) -> Result<UpperBounds> {
        UpperBounds::new(self.mu_values().to_vec())
    }

    pub fn schedule(&self) -> Result<MultiStepLr> {
        MultiStepLr::new(self.lr, self.lr_milestones.clone())
    }

    pub fn baseline_mode(&self) -> ScalarizationMode {
        ScalarizationMode::LinearFixed(self.baseline_weights.to_vec())
    }
}
