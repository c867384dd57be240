use std::path::{Path, PathBuf};

use ibw_core::nuisance::{ClutterConfig, DiscConfig};
use ibw_core::vnn::{Activation, LrSchedule, NoiseModel, Plateau, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    Real,
    Random,
}

impl LabelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelMode::Real => "real",
            LabelMode::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Mnist,
    Synthetic,
}

/// Everything one invocation needs. Every field has a default, so an empty
/// file is a valid config; `--dump-config` prints the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Concurrent cells in a sweep.
    pub jobs: usize,
    pub out: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub sweep: SweepConfig,
    pub corruption: CorruptionConfig,
    pub bounds: BoundsConfig,
    pub nuisance: NuisanceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub images: PathBuf,
    pub labels: PathBuf,
    /// Training pool is everything before the last `test_size` samples;
    /// cells take its first `n_train`.
    pub n_train: usize,
    pub test_size: usize,
    /// Used by `train` only; sweeps set labels per cell.
    pub label_mode: LabelMode,
    pub corruption: f64,
    pub synthetic: SyntheticConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub num_classes: usize,
    pub margin: f64,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub noise: NoiseModel,
    pub init_log_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub momentum: f64,
    pub log_alpha_lr_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub betas: Vec<f64>,
    pub sizes: Vec<usize>,
    pub label_mode: LabelMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionConfig {
    pub levels: Vec<f64>,
    pub beta: f64,
    pub n: usize,
    pub max_epochs: usize,
    /// Learning-rate decay period for this sweep; 0 keeps the rate
    /// constant. The decay factor is `train.lr_decay_factor`.
    pub lr_decay_every: usize,
    /// The plateau is taken on the per-sample objective CE + beta·Ĩ/N.
    pub plateau_window: usize,
    pub plateau_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub alphas: Vec<f64>,
    pub dim_x: usize,
    pub dim_z: usize,
    pub mc_samples: usize,
    /// Slack above `B(alpha)` allowed for the per-unit estimate.
    pub tightness_slack: f64,
    pub flat_k: usize,
    pub flat_beta: f64,
    pub flat_rel_tol: f64,
    /// Log-scale spread of random factors applied to the optimal alphas
    /// before the Jensen check; 0 checks the optima themselves.
    pub alpha_perturbation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NuisanceConfig {
    pub betas: Vec<f64>,
    pub n_train: usize,
    /// Cluttered samples used for the MI estimate (taken after the
    /// training ones in the pool).
    pub n_estimate: usize,
    pub epochs: usize,
    pub clutter: ClutterConfig,
    pub discriminator: DiscConfig,
    pub calibration_rhos: Vec<f64>,
    pub calibration_samples: usize,
    pub calibration_hidden: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            jobs: 1,
            out: PathBuf::from("runs"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            sweep: SweepConfig::default(),
            corruption: CorruptionConfig::default(),
            bounds: BoundsConfig::default(),
            nuisance: NuisanceConfig::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Mnist,
            images: PathBuf::from("data/mnist-10k/images-idx3-ubyte.gz"),
            labels: PathBuf::from("data/mnist-10k/labels-idx1-ubyte.gz"),
            n_train: 512,
            test_size: 2048,
            label_mode: LabelMode::Real,
            corruption: 0.0,
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dim: 16,
            num_classes: 4,
            margin: 10.0,
            pool: 4096,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![128, 128],
            activation: Activation::Relu,
            noise: NoiseModel::LogNormal,
            init_log_alpha: -6.0,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            beta: t.beta,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate.initial,
            lr_decay_every: t.learning_rate.decay_every,
            lr_decay_factor: t.learning_rate.decay_factor,
            momentum: t.momentum,
            log_alpha_lr_scale: t.log_alpha_lr_scale,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            betas: vec![0.01, 0.03, 0.1, 0.3, 1.0, 3.0],
            sizes: vec![256, 512, 1024],
            label_mode: LabelMode::Random,
        }
    }
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        let p = Plateau::default();
        CorruptionConfig {
            levels: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            beta: 0.1,
            n: 2048,
            max_epochs: 300,
            lr_decay_every: 0,
            plateau_window: p.window,
            plateau_tol: p.tol,
        }
    }
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            alphas: vec![0.1, 0.5, 1.0],
            dim_x: 512,
            dim_z: 4,
            mc_samples: 100_000,
            tightness_slack: 0.05,
            flat_k: 8,
            flat_beta: 0.5,
            flat_rel_tol: 1e-6,
            alpha_perturbation: 0.0,
        }
    }
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            betas: vec![0.01, 0.1, 1.0],
            n_train: 2048,
            n_estimate: 4096,
            epochs: 60,
            clutter: ClutterConfig::default(),
            discriminator: DiscConfig::default(),
            calibration_rhos: vec![0.0, 0.5, 0.8],
            calibration_samples: 50_000,
            calibration_hidden: vec![64, 64],
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, model: &ModelConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            beta: self.beta,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: LrSchedule {
                initial: self.learning_rate,
                decay_every: self.lr_decay_every,
                decay_factor: self.lr_decay_factor,
            },
            momentum: self.momentum,
            seed,
            init_log_alpha: model.init_log_alpha,
            noise: model.noise,
            log_alpha_lr_scale: self.log_alpha_lr_scale,
            early_stop: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::config(m));
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if self.model.hidden.iter().any(|&h| h == 0) {
            return bad("hidden widths must be positive".into());
        }
        if !(self.model.init_log_alpha.is_finite()) {
            return bad("init_log_alpha must be finite".into());
        }
        self.train
            .to_train_config(&self.model, self.seed)
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.data.corruption) {
            return bad(format!("data.corruption {} outside [0, 1]", self.data.corruption));
        }
        if self.data.n_train == 0 || self.data.test_size == 0 {
            return bad("n_train and test_size must be positive".into());
        }
        if self.sweep.betas.is_empty() || self.sweep.sizes.is_empty() {
            return bad("sweep grids must be nonempty".into());
        }
        if self.sweep.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return bad("sweep betas must be finite and >= 0".into());
        }
        if self.sweep.sizes.iter().any(|&n| n == 0) {
            return bad("sweep sizes must be positive".into());
        }
        let c = &self.corruption;
        if c.levels.is_empty() {
            return bad("corruption levels must be nonempty".into());
        }
        if let Some(p) = c.levels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("corruption level {p} outside [0, 1]"));
        }
        if !(c.beta >= 0.0 && c.beta < 1.0) {
            return bad(format!("corruption sweep needs 0 <= beta < 1, got {}", c.beta));
        }
        if c.n == 0 {
            return bad("corruption.n must be positive".into());
        }
        let b = &self.bounds;
        if b.alphas.is_empty() || b.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return bad("bounds.alphas must be nonempty and positive".into());
        }
        if b.dim_x == 0 || b.dim_z == 0 || b.mc_samples < 2 || b.flat_k == 0 {
            return bad("bounds dims must be positive and mc_samples >= 2".into());
        }
        if !(b.flat_beta > 0.0) || !(b.alpha_perturbation >= 0.0) {
            return bad("flat_beta must be positive and alpha_perturbation >= 0".into());
        }
        let n = &self.nuisance;
        if n.betas.is_empty() || n.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return bad("nuisance betas must be nonempty, finite and >= 0".into());
        }
        if n.n_train == 0 || n.n_estimate < 2 {
            return bad("nuisance sample counts too small".into());
        }
        if n.calibration_rhos.iter().any(|r| !(r.abs() < 1.0)) {
            return bad("calibration rhos must satisfy |rho| < 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn partial_override() {
        let cfg = ExperimentConfig::parse("seed = 3\n[train]\nbeta = 0.5\n[sweep]\nbetas = [1.0]\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.beta, 0.5);
        assert_eq!(cfg.train.epochs, 60);
        assert_eq!(cfg.sweep.betas, vec![1.0]);
    }

    #[test]
    fn unknown_key_is_config_error() {
        let e = ExperimentConfig::parse("[train]\nbta = 1\n").unwrap_err();
        assert_eq!(e.code, 2);
        assert!(e.message.contains("bta"), "{}", e.message);
    }

    #[test]
    fn invalid_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.betas.clear();
        assert_eq!(cfg.validate().unwrap_err().code, 2);
        let mut cfg = ExperimentConfig::default();
        cfg.corruption.beta = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.train.momentum = 1.0;
        assert!(cfg.validate().is_err());
    }
}
