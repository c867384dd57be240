use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::layer::NoiseModel;
use super::loss::{log_softmax, loss_and_grad, network_info};
use super::network::{forward_deterministic, forward_stochastic, NetworkState};
use super::optim::{sgd_step, SgdState};
use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

const STREAM_SHUFFLE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const EVAL_CHUNK: usize = 1024;

/// Step decay: `initial * decay_factor^(epoch / decay_every)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub initial: f64,
    /// `0` disables decay.
    pub decay_every: usize,
    pub decay_factor: f64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            initial: lr,
            decay_every: 0,
            decay_factor: 1.0,
        }
    }

    pub fn at(&self, epoch: usize) -> f64 {
        if self.decay_every == 0 {
            return self.initial;
        }
        self.initial * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// Stop once the monitored quantity moved less than `tol` over the last
/// `window` epochs. The quantity is the epoch CE (nats/sample) plus
/// `info_weight` times Ĩ/N; `info_weight = beta` monitors the per-sample
/// training objective, `0` the CE alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plateau {
    pub window: usize,
    pub tol: f64,
    #[serde(default)]
    pub info_weight: f64,
}

impl Default for Plateau {
    fn default() -> Self {
        Plateau {
            window: 10,
            tol: 1e-3,
            info_weight: 0.0,
        }
    }
}

impl Plateau {
    fn monitored(&self, r: &EpochRecord) -> f64 {
        r.ce_nats_per_sample + self.info_weight * r.info_nats_per_sample
    }

    pub fn reached(&self, history: &[EpochRecord]) -> bool {
        if self.window == 0 || history.len() <= self.window {
            return false;
        }
        let last = self.monitored(&history[history.len() - 1]);
        let then = self.monitored(&history[history.len() - 1 - self.window]);
        (last - then).abs() < self.tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: LrSchedule,
    pub momentum: f64,
    pub seed: u64,
    pub init_log_alpha: f64,
    pub noise: NoiseModel,
    /// Step-size multiplier for `log_alpha`, see [`SgdState`].
    pub log_alpha_lr_scale: f64,
    pub early_stop: Option<Plateau>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 1.0,
            epochs: 60,
            batch_size: 128,
            learning_rate: LrSchedule {
                initial: 0.02,
                decay_every: 40,
                decay_factor: 0.1,
            },
            momentum: 0.9,
            seed: 0,
            init_log_alpha: -6.0,
            noise: NoiseModel::LogNormal,
            log_alpha_lr_scale: 1000.0,
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.learning_rate.initial >= 0.0) || !(self.learning_rate.decay_factor > 0.0) {
            return Err(Error::Config("learning rate and decay factor must be positive".into()));
        }
        if !(self.log_alpha_lr_scale >= 0.0) {
            return Err(Error::Config("log_alpha_lr_scale must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch CE over the epoch under sampled noise.
    pub ce_nats_per_sample: f64,
    /// Running accuracy of the sampled (noisy) forward passes.
    pub train_acc: f64,
    /// `I(w;D)` at the end of the epoch, modulo an additive constant.
    pub info_nats: f64,
    pub info_nats_per_sample: f64,
    /// Cumulative wall time since the start of training.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Minibatch SGD on `sum_i CE_i + beta * I(w;D)`.
///
/// Gradients of the full-dataset objective are divided by `N` before the
/// step, so `learning_rate` is per-sample. Shuffling and noise come from
/// streams derived from `config.seed`; the run is a pure function of
/// `(net, data, config)`.
pub fn train(net: &mut NetworkState, data: &DatasetSplit, config: &TrainConfig) -> Result<TrainHistory> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::input("training set is empty"));
    }
    if data.feature_dim() != net.input_dim() {
        return Err(Error::dim(format!(
            "dataset has {} features, network expects {}",
            data.feature_dim(),
            net.input_dim()
        )));
    }
    let n = data.len();
    let flat = data.flattened();
    let root = Rng::new(config.seed);
    let mut shuffle_rng = root.derive(STREAM_SHUFFLE);
    let mut noise_rng = root.derive(STREAM_NOISE);
    let mut opt = SgdState::new(net).with_log_alpha_lr_scale(config.log_alpha_lr_scale);
    let mut history = TrainHistory::default();
    let start = Instant::now();

    for epoch in 0..config.epochs {
        let lr = config.learning_rate.at(epoch);
        let order = shuffle_rng.permutation(n);
        let mut ce_weighted = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let x = flat.features.select_rows(batch);
            let y: Vec<usize> = batch.iter().map(|&i| flat.labels[i]).collect();
            let mut out = loss_and_grad(net, &x, &y, config.beta, n, &mut noise_rng)?;
            if !out.ce_mean.is_finite() || !out.grads.all_finite() {
                return Err(Error::NonFinite(format!("loss became non-finite in epoch {epoch}")));
            }
            out.grads.scale(1.0 / n as f64);
            sgd_step(net, &out.grads, &mut opt, lr, config.momentum)?;
            ce_weighted += out.ce_mean * batch.len() as f64;
            correct += out.correct;
        }
        if !net.all_finite() {
            return Err(Error::NonFinite(format!("parameters became non-finite in epoch {epoch}")));
        }
        let info = network_info(net);
        history.records.push(EpochRecord {
            epoch: epoch + 1,
            ce_nats_per_sample: ce_weighted / n as f64,
            train_acc: correct as f64 / n as f64,
            info_nats: info,
            info_nats_per_sample: info / n as f64,
            seconds: start.elapsed().as_secs_f64(),
        });
        if let Some(p) = &config.early_stop {
            if p.reached(&history.records) {
                break;
            }
        }
    }
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EvalMode {
    Deterministic,
    /// Average of `samples` softmax outputs under sampled noise.
    StochasticAvg { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub ce_nats_per_sample: f64,
}

pub fn evaluate(net: &NetworkState, data: &DatasetSplit, mode: EvalMode) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(Error::input("evaluation set is empty"));
    }
    let flat = data.flattened();
    let k = net.num_classes();
    if let Some(bad) = flat.labels.iter().find(|&&y| y >= k) {
        return Err(Error::input(format!("label {bad} outside [0, {k})")));
    }
    let mut rng = match mode {
        EvalMode::StochasticAvg { samples: 0, .. } => {
            return Err(Error::input("stochastic evaluation needs at least one sample"))
        }
        EvalMode::StochasticAvg { seed, .. } => Some(Rng::new(seed)),
        EvalMode::Deterministic => None,
    };
    let n = flat.len();
    let mut correct = 0usize;
    let mut ce = 0.0;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let x = flat.features.select_rows(&idx);
        let probs = match (mode, rng.as_mut()) {
            (EvalMode::StochasticAvg { samples, .. }, Some(rng)) => {
                let mut acc = Tensor::zeros(&[idx.len(), k]);
                for _ in 0..samples {
                    let trace = forward_stochastic(net, &x, rng)?;
                    let p = log_softmax(trace.logits()).map_with(f64::exp);
                    acc.data_mut().iter_mut().zip(p.data()).for_each(|(a, b)| *a += b);
                }
                acc.map_with(|v| v / samples as f64)
            }
            _ => log_softmax(&forward_deterministic(net, &x)?).map_with(f64::exp),
        };
        for (r, &i) in idx.iter().enumerate() {
            let row = probs.row(r);
            let y = flat.labels[i];
            let argmax = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc })
                .0;
            if argmax == y {
                correct += 1;
            }
            ce -= row[y].max(f64::MIN_POSITIVE).ln();
        }
    }
    Ok(EvalResult {
        accuracy: correct as f64 / n as f64,
        ce_nats_per_sample: ce / n as f64,
    })
}
