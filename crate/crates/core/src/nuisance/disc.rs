//! Density-ratio estimation of `I(z;n)` with a classifier that tells joint
//! pairs `(z, n) ~ p(z, n)` from product pairs `(z, n') ~ p(z) p(n)`.
//!
//! With class 0 = product and class 1 = joint, the optimal classifier has
//! `D = P(product | z, n) = p(z)p(n) / (p(z)p(n) + p(z,n))`, so
//! `ln((1 - D) / D) = ln p(z|n) / p(z)` and its mean over joint pairs is the
//! mutual information. Nothing guarantees the trained classifier is close
//! to optimal; the estimate is only as good as the fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::MIEstimate;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::vnn::{
    forward_deterministic, init_network, log_softmax, loss_and_grad, sgd_step, Activation, NetworkSpec, NetworkState,
    NoiseModel, SgdState,
};

pub const CLASS_PRODUCT: usize = 0;
pub const CLASS_JOINT: usize = 1;
pub const D_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Fraction of pairs kept out of training for model selection and for
    /// the estimate itself.
    pub holdout: f64,
}

impl Default for DiscConfig {
    fn default() -> Self {
        DiscConfig {
            hidden: vec![256, 256],
            epochs: 30,
            batch_size: 256,
            learning_rate: 0.01,
            momentum: 0.9,
            holdout: 0.2,
        }
    }
}

/// Paired samples, row `i` of `z` goes with row `i` of `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairs {
    pub z: Tensor,
    pub n: Tensor,
}

impl Pairs {
    pub fn new(z: Tensor, n: Tensor) -> Result<Self> {
        if z.rank() != 2 || n.rank() != 2 || z.rows() != n.rows() {
            return Err(Error::dim(format!(
                "pairs need [N x dz] and [N x dn], got {:?} and {:?}",
                z.shape(),
                n.shape()
            )));
        }
        Ok(Pairs { z, n })
    }

    pub fn len(&self) -> usize {
        self.z.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Pairs {
        Pairs {
            z: self.z.select_rows(idx),
            n: self.n.select_rows(idx),
        }
    }

    /// Product-of-marginals pairs: `n` rows reshuffled against `z`.
    pub fn permuted(&self, rng: &mut Rng) -> Pairs {
        let perm = rng.permutation(self.len());
        Pairs {
            z: self.z.clone(),
            n: self.n.select_rows(&perm),
        }
    }

    fn stacked(&self) -> Result<Tensor> {
        Tensor::hstack(&self.z, &self.n)
    }
}

/// Per-feature standardization of the concatenated `[z, n]` input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl FeatureScaler {
    fn fit(x: &Tensor) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for i in 0..n {
            for (j, &v) in x.row(i).iter().enumerate() {
                mean[j] += v;
                sq[j] += v * v;
            }
        }
        let nf = n.max(1) as f64;
        let inv_std = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= nf;
                let var = s / nf - *m * *m;
                if var > 1e-12 {
                    1.0 / var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        FeatureScaler { mean, inv_std }
    }

    fn apply(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let d = x.cols().max(1);
        for row in out.data_mut().chunks_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *v = (*v - m) * s;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub net: NetworkState,
    pub scaler: FeatureScaler,
    /// Mean logistic loss on the held-out pairs of the selected epoch.
    pub holdout_loss: f64,
    pub holdout_accuracy: f64,
    pub best_epoch: usize,
}

impl Discriminator {
    /// `ln((1 - D) / D)` per pair, with `D` clipped to
    /// `[D_CLIP, 1 - D_CLIP]`. Also returns how many pairs were clipped.
    pub fn log_ratio(&self, pairs: &Pairs) -> Result<(Vec<f64>, usize)> {
        let x = self.scaler.apply(&pairs.stacked()?);
        let logits = forward_deterministic(&self.net, &x)?;
        let limit = ((1.0 - D_CLIP) / D_CLIP).ln();
        let mut clipped = 0;
        let vals = (0..logits.rows())
            .map(|i| {
                let r = logits.row(i);
                let v = r[CLASS_JOINT] - r[CLASS_PRODUCT];
                if v.abs() > limit {
                    clipped += 1;
                    v.clamp(-limit, limit)
                } else {
                    v
                }
            })
            .collect();
        Ok((vals, clipped))
    }

    /// Mean logistic loss and accuracy on balanced joint/product pairs.
    pub fn score(&self, joint: &Pairs, product: &Pairs) -> Result<(f64, f64)> {
        let (x, y) = labelled(joint, product)?;
        score_net(&self.net, &self.scaler.apply(&x), &y)
    }
}

fn labelled(joint: &Pairs, product: &Pairs) -> Result<(Tensor, Vec<usize>)> {
    let xj = joint.stacked()?;
    let xp = product.stacked()?;
    if xj.cols() != xp.cols() {
        return Err(Error::dim("joint and product pairs differ in width"));
    }
    let mut data = xp.into_data();
    data.extend_from_slice(xj.data());
    let cols = xj.cols();
    let x = Tensor::new(vec![data.len() / cols.max(1), cols], data)?;
    let mut y = vec![CLASS_PRODUCT; product.len()];
    y.extend(std::iter::repeat(CLASS_JOINT).take(joint.len()));
    Ok((x, y))
}

fn score_net(net: &NetworkState, x: &Tensor, y: &[usize]) -> Result<(f64, f64)> {
    let logp = log_softmax(&forward_deterministic(net, x)?);
    let mut loss = 0.0;
    let mut correct = 0;
    for (i, &c) in y.iter().enumerate() {
        let r = logp.row(i);
        loss -= r[c];
        let pred = if r[CLASS_JOINT] > r[CLASS_PRODUCT] { CLASS_JOINT } else { CLASS_PRODUCT };
        if pred == c {
            correct += 1;
        }
    }
    let n = y.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains a two-class dense classifier (class 0 product, class 1 joint)
/// by minibatch SGD on the logistic loss. The network from the epoch with
/// the lowest loss on the held-out pairs is kept.
pub fn train_discriminator(
    joint: &Pairs,
    product: &Pairs,
    holdout_joint: &Pairs,
    holdout_product: &Pairs,
    config: &DiscConfig,
    rng: &mut Rng,
) -> Result<Discriminator> {
    if joint.is_empty() || product.is_empty() || holdout_joint.is_empty() || holdout_product.is_empty() {
        return Err(Error::input("discriminator needs nonempty joint and product samples"));
    }
    if joint.len() != product.len() {
        return Err(Error::input(format!(
            "{} joint but {} product samples",
            joint.len(),
            product.len()
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let (x_raw, y) = labelled(joint, product)?;
    let scaler = FeatureScaler::fit(&x_raw);
    let x = scaler.apply(&x_raw);
    let (hx_raw, hy) = labelled(holdout_joint, holdout_product)?;
    let hx = scaler.apply(&hx_raw);

    let mut sizes = vec![x.cols()];
    sizes.extend(&config.hidden);
    sizes.push(2);
    let spec = NetworkSpec::mlp(&sizes, Activation::Relu, NoiseModel::None, 0.0);
    let mut net = init_network(&spec, rng)?;
    let mut opt = SgdState::new(&net);
    let n = y.len();

    let (loss0, acc0) = score_net(&net, &hx, &hy)?;
    let mut best = (net.clone(), loss0, acc0, 0usize);
    for epoch in 0..config.epochs {
        let order = rng.permutation(n);
        for batch in order.chunks(config.batch_size) {
            let xb = x.select_rows(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            // n_total = batch size gives the plain batch-sum loss
            let mut out = loss_and_grad(&net, &xb, &yb, 0.0, batch.len(), rng)?;
            if !out.grads.all_finite() {
                return Err(Error::NonFinite(format!("discriminator diverged in epoch {epoch}")));
            }
            out.grads.scale(1.0 / batch.len() as f64);
            sgd_step(&mut net, &out.grads, &mut opt, config.learning_rate, config.momentum)?;
        }
        let (loss, acc) = score_net(&net, &hx, &hy)?;
        if loss < best.1 {
            best = (net.clone(), loss, acc, epoch + 1);
        }
    }
    Ok(Discriminator {
        net: best.0,
        scaler,
        holdout_loss: best.1,
        holdout_accuracy: best.2,
        best_epoch: best.3,
    })
}

/// Mean of `ln((1 - D)/D)` over `joint` pairs, which should not have been
/// used for training.
pub fn estimate_mi_density_ratio(disc: &Discriminator, joint: &Pairs) -> Result<MIEstimate> {
    if joint.is_empty() {
        return Err(Error::input("no joint samples to average over"));
    }
    let (vals, clipped) = disc.log_ratio(joint)?;
    let mut est = MIEstimate::from_samples(&vals);
    est.final_loss = Some(disc.holdout_loss);
    est.clipped = clipped;
    Ok(est)
}

/// Full pipeline: split `joint` into training and held-out parts, build
/// product pairs by permuting `n` within each part, train, and estimate on
/// the held-out joint pairs.
pub fn estimate_mi(joint: &Pairs, config: &DiscConfig, rng: &mut Rng) -> Result<(MIEstimate, Discriminator)> {
    let n = joint.len();
    if !(config.holdout > 0.0 && config.holdout < 1.0) {
        return Err(Error::Config(format!("holdout fraction {} outside (0, 1)", config.holdout)));
    }
    let n_hold = ((n as f64 * config.holdout).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    if n < 2 {
        return Err(Error::input("need at least two joint samples"));
    }
    let perm = rng.permutation(n);
    let (hold_idx, train_idx) = perm.split_at(n_hold);
    let train_joint = joint.select(train_idx);
    let hold_joint = joint.select(hold_idx);
    let train_product = train_joint.permuted(rng);
    let hold_product = hold_joint.permuted(rng);
    let disc = train_discriminator(&train_joint, &train_product, &hold_joint, &hold_product, config, rng)?;
    let est = estimate_mi_density_ratio(&disc, &hold_joint)?;
    Ok((est, disc))
}

/// `N` pairs of unit-variance jointly normal scalars with correlation `rho`.
pub fn synthetic_correlated_gaussian(rho: f64, n: usize, rng: &mut Rng) -> Result<Pairs> {
    if !(rho.abs() < 1.0) {
        return Err(Error::domain(format!("|rho| must be < 1, got {rho}")));
    }
    let c = (1.0 - rho * rho).sqrt();
    let mut z = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.standard_normal();
        let b = rng.standard_normal();
        z.push(a);
        m.push(rho * a + c * b);
    }
    Pairs::new(Tensor::new(vec![n, 1], z)?, Tensor::new(vec![n, 1], m)?)
}

/// `-1/2 ln(1 - rho^2)`.
pub fn true_gaussian_mi(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::domain(format!("|rho| must be < 1, got {rho}")));
    }
    Ok(-0.5 * (-rho * rho).ln_1p())
}
