use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vnn::NetworkState;

/// `I(w;D) = -1/2 sum_i log alpha_i`, given the `log alpha_i` directly.
///
/// Only defined up to an additive constant (the prior is improper), so
/// only differences and gradients of this number carry meaning.
pub fn info_in_weights(log_alphas: &Tensor) -> f64 {
    -0.5 * log_alphas.sum()
}

/// `exp(-info / dim)`: the shared noise level that would store `info` nats
/// in `dim` weights.
pub fn effective_alpha(info_nats: f64, dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(Error::domain("effective alpha needs dim >= 1"));
    }
    Ok((-info_nats / dim as f64).exp())
}

/// Information held by each noisy dense layer of a network. All `nats`
/// fields are modulo the same additive constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    pub per_layer_nats: Vec<f64>,
    pub per_layer_effective_alpha: Vec<f64>,
    pub per_layer_weights: Vec<usize>,
    pub total_nats: f64,
    pub nats_per_sample: f64,
    pub n_samples: usize,
}

pub fn info_report(net: &NetworkState, n_samples: usize) -> InfoReport {
    let mut per_layer_nats = Vec::new();
    let mut per_layer_effective_alpha = Vec::new();
    let mut per_layer_weights = Vec::new();
    for d in net.dense_layers().filter(|d| d.noise.is_noisy()) {
        let info = info_in_weights(&d.log_alpha);
        per_layer_nats.push(info);
        per_layer_weights.push(d.num_weights());
        per_layer_effective_alpha.push(effective_alpha(info, d.num_weights().max(1)).unwrap_or(1.0));
    }
    let total_nats: f64 = per_layer_nats.iter().sum();
    InfoReport {
        per_layer_nats,
        per_layer_effective_alpha,
        per_layer_weights,
        total_nats,
        nats_per_sample: if n_samples > 0 { total_nats / n_samples as f64 } else { f64::NAN },
        n_samples,
    }
}
