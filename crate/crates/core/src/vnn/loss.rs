//! The regularized objective `sum_i CE_i + beta * I(w;D)` and its exact
//! gradient through the local-reparameterization graph.

use super::layer::{LOG_ALPHA_MAX, LOG_ALPHA_MIN};
use super::network::{forward_stochastic, forward_with_noise, ForwardTrace, Layer, NetworkState, NoiseSample};
use crate::error::{Error, Result};
use crate::info::info_in_weights;
use crate::rng::Rng;
use crate::tensor::{gemm, Tensor, Transpose};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub w_mean: Tensor,
    pub bias: Tensor,
    pub log_alpha: Tensor,
}

/// Gradients aligned with `NetworkState::layers`; `None` for parameter-free
/// layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<DenseGrads>>,
}

impl Gradients {
    pub fn dense(&self) -> impl Iterator<Item = &DenseGrads> {
        self.layers.iter().flatten()
    }

    pub fn all_finite(&self) -> bool {
        self.dense()
            .all(|g| g.w_mean.all_finite() && g.bias.all_finite() && g.log_alpha.all_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.layers.iter_mut().flatten() {
            for t in [&mut g.w_mean, &mut g.bias, &mut g.log_alpha] {
                t.data_mut().iter_mut().for_each(|v| *v *= factor);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Mean cross-entropy over the batch, nats/sample.
    pub ce_mean: f64,
    /// `n_total * ce_mean`, the batch estimate of the dataset CE sum.
    pub ce_sum_estimate: f64,
    /// `I(w;D)` surrogate in nats (modulo the additive constant).
    pub info_nats: f64,
    /// `ce_sum_estimate + beta * info_nats`
    pub total_loss: f64,
    /// Correct argmax predictions of the sampled logits.
    pub correct: usize,
    pub grads: Gradients,
}

/// Per-network information surrogate `-1/2 sum log alpha` over all noisy
/// dense layers. Deterministic layers carry no `alpha` and are skipped.
pub fn network_info(net: &NetworkState) -> f64 {
    net.dense_layers()
        .filter(|d| d.noise.is_noisy())
        .map(|d| info_in_weights(&d.log_alpha))
        .sum()
}

/// Objective and gradients for one minibatch with freshly sampled noise.
pub fn loss_and_grad(
    net: &NetworkState,
    x: &Tensor,
    labels: &[usize],
    beta: f64,
    n_total: usize,
    rng: &mut Rng,
) -> Result<LossOutput> {
    check_labels(net, x, labels)?;
    let trace = forward_stochastic(net, x, rng)?;
    loss_from_trace(net, &trace, labels, beta, n_total)
}

/// As [`loss_and_grad`] but with a fixed noise draw, which makes the
/// objective a deterministic function of the parameters.
pub fn loss_and_grad_with_noise(
    net: &NetworkState,
    x: &Tensor,
    labels: &[usize],
    beta: f64,
    n_total: usize,
    noise: &NoiseSample,
) -> Result<LossOutput> {
    check_labels(net, x, labels)?;
    let trace = forward_with_noise(net, x, noise)?;
    loss_from_trace(net, &trace, labels, beta, n_total)
}

fn check_labels(net: &NetworkState, x: &Tensor, labels: &[usize]) -> Result<()> {
    if labels.len() != x.rows() {
        return Err(Error::input(format!(
            "{} labels for {} rows",
            labels.len(),
            x.rows()
        )));
    }
    let k = net.num_classes();
    if let Some(bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::input(format!("label {bad} outside [0, {k})")));
    }
    Ok(())
}

/// Row-wise `log softmax`.
pub fn log_softmax(logits: &Tensor) -> Tensor {
    let k = logits.cols();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k.max(1)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

fn loss_from_trace(
    net: &NetworkState,
    trace: &ForwardTrace,
    labels: &[usize],
    beta: f64,
    n_total: usize,
) -> Result<LossOutput> {
    let logits = trace.logits();
    let batch = logits.rows();
    let k = logits.cols();
    let logp = log_softmax(logits);

    let mut ce_sum = 0.0;
    let mut correct = 0;
    // d(total)/d(logits) = n_total / B * (softmax - onehot)
    let scale = if batch > 0 { n_total as f64 / batch as f64 } else { 0.0 };
    let mut grad = logp.map_with(f64::exp);
    for (i, &y) in labels.iter().enumerate() {
        let row = logp.row(i);
        ce_sum -= row[y];
        let argmax = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc })
            .0;
        if argmax == y {
            correct += 1;
        }
        let g = grad.row_mut(i);
        g[y] -= 1.0;
        g.iter_mut().for_each(|v| *v *= scale);
    }
    debug_assert_eq!(grad.cols(), k);
    let ce_mean = if batch > 0 { ce_sum / batch as f64 } else { 0.0 };
    let ce_sum_estimate = n_total as f64 * ce_mean;
    let info_nats = network_info(net);

    let mut grads = backward(net, trace, grad)?;
    if beta != 0.0 {
        for (layer, g) in net.layers.iter().zip(grads.layers.iter_mut()) {
            if let (Layer::Dense(d), Some(g)) = (layer, g) {
                if !d.noise.is_noisy() {
                    continue;
                }
                for (gla, &la) in g.log_alpha.data_mut().iter_mut().zip(d.log_alpha.data()) {
                    if la > LOG_ALPHA_MIN && la < LOG_ALPHA_MAX {
                        *gla -= 0.5 * beta;
                    }
                }
            }
        }
    }

    Ok(LossOutput {
        ce_mean,
        ce_sum_estimate,
        info_nats,
        total_loss: ce_sum_estimate + beta * info_nats,
        correct,
        grads,
    })
}

/// Backpropagates `d loss / d logits` through the trace.
pub fn backward(net: &NetworkState, trace: &ForwardTrace, d_logits: Tensor) -> Result<Gradients> {
    let n = net.layers.len();
    let mut grads: Vec<Option<DenseGrads>> = vec![None; n];
    let mut g = d_logits;
    for i in (0..n).rev() {
        let input = trace.layer_input(i);
        match &net.layers[i] {
            Layer::SoftmaxHead => {}
            Layer::Relu => {
                for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
                    if x <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            Layer::Elu => {
                for ((gv, &x), &y) in g.data_mut().iter_mut().zip(input.data()).zip(trace.outputs[i].data()) {
                    if x <= 0.0 {
                        *gv *= y + 1.0;
                    }
                }
            }
            Layer::Dense(d) => {
                let mut gw = gemm(&g, input, Transpose::Left)?;
                let gb = g.reduce(crate::tensor::Reduction::Sum, Some(0))?;
                let mut gla = Tensor::zeros(d.log_alpha.shape());
                let mut gx = if i > 0 { Some(gemm(&g, &d.w_mean, Transpose::None)?) } else { None };

                if let (Some(std), Some(xi)) = (&trace.std[i], &trace.noise.per_layer[i]) {
                    // out = mean + std * xi, std = sqrt(v), v = (x^2) A^T, A = alpha_tilde W^2
                    let dv = g
                        .zip_with(xi, |a, b| a * b)?
                        .zip_with(std, |ds, s| if s > 0.0 { ds / (2.0 * s) } else { 0.0 })?;
                    let x2 = input.map_with(|v| v * v);
                    let d_a = gemm(&dv, &x2, Transpose::Left)?;
                    let noise = d.noise;
                    for (((gwv, gl), &da), (&w, &la)) in gw
                        .data_mut()
                        .iter_mut()
                        .zip(gla.data_mut().iter_mut())
                        .zip(d_a.data())
                        .zip(d.w_mean.data().iter().zip(d.log_alpha.data()))
                    {
                        let at = noise.alpha_tilde(la);
                        *gwv += da * 2.0 * at * w;
                        *gl += da * w * w * noise.alpha_tilde_grad(la);
                    }
                    if let Some(gx) = gx.as_mut() {
                        let weight_var = d.weight_variance();
                        let t = gemm(&dv, &weight_var, Transpose::None)?;
                        for ((gxv, &tv), &xv) in gx.data_mut().iter_mut().zip(t.data()).zip(input.data()) {
                            *gxv += 2.0 * xv * tv;
                        }
                    }
                }
                grads[i] = Some(DenseGrads {
                    w_mean: gw,
                    bias: gb,
                    log_alpha: gla,
                });
                if let Some(gx) = gx {
                    g = gx;
                } else {
                    break;
                }
            }
        }
    }
    Ok(Gradients { layers: grads })
}
