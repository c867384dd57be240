use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const LOG_ALPHA_MIN: f64 = -12.0;
pub const LOG_ALPHA_MAX: f64 = 0.0;

/// Distribution of the multiplicative weight noise `w = eps * w_mean`.
///
/// Both noisy variants have `E[eps] = 1`. `alpha = exp(log_alpha)` is the
/// noise parameter; the variance of `eps` is `alpha_tilde`:
///
/// * `LogNormal`: `eps ~ logN(-alpha/2, alpha)`, `alpha_tilde = exp(alpha) - 1`
/// * `GaussianMultiplicative`: `eps ~ N(1, alpha)`, `alpha_tilde = alpha`
/// * `None`: `eps = 1`, the layer is an ordinary dense layer
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    #[default]
    LogNormal,
    GaussianMultiplicative,
    None,
}

impl NoiseModel {
    /// Noise variance `alpha_tilde` for a given `log_alpha`.
    #[inline]
    pub fn alpha_tilde(self, log_alpha: f64) -> f64 {
        match self {
            NoiseModel::LogNormal => log_alpha.exp().exp_m1(),
            NoiseModel::GaussianMultiplicative => log_alpha.exp(),
            NoiseModel::None => 0.0,
        }
    }

    /// `d alpha_tilde / d log_alpha`.
    #[inline]
    pub fn alpha_tilde_grad(self, log_alpha: f64) -> f64 {
        match self {
            NoiseModel::LogNormal => {
                let a = log_alpha.exp();
                a.exp() * a
            }
            NoiseModel::GaussianMultiplicative => log_alpha.exp(),
            NoiseModel::None => 0.0,
        }
    }

    pub fn is_noisy(self) -> bool {
        !matches!(self, NoiseModel::None)
    }

    /// One draw of `eps` with parameter `alpha`, from a standard normal `u`.
    pub fn eps_from_normal(self, alpha: f64, u: f64) -> f64 {
        match self {
            NoiseModel::LogNormal => (-alpha / 2.0 + alpha.sqrt() * u).exp(),
            NoiseModel::GaussianMultiplicative => 1.0 + alpha.sqrt() * u,
            NoiseModel::None => 1.0,
        }
    }
}

impl std::str::FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-normal" | "lognormal" => Ok(NoiseModel::LogNormal),
            "gaussian-multiplicative" | "gaussian" => Ok(NoiseModel::GaussianMultiplicative),
            "none" => Ok(NoiseModel::None),
            other => Err(Error::Config(format!("unknown noise model {other:?}"))),
        }
    }
}

/// Dense layer with per-weight multiplicative noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalDense {
    /// `[out x in]`
    pub w_mean: Tensor,
    /// `[out]`
    pub bias: Tensor,
    /// `[out x in]`, kept in `[LOG_ALPHA_MIN, LOG_ALPHA_MAX]`.
    pub log_alpha: Tensor,
    pub noise: NoiseModel,
}

impl VariationalDense {
    pub fn new(w_mean: Tensor, bias: Tensor, log_alpha: Tensor, noise: NoiseModel) -> Result<Self> {
        let [out, inp] = *w_mean.shape() else {
            return Err(Error::dim(format!(
                "weight mean must be a matrix, got {:?}",
                w_mean.shape()
            )));
        };
        if bias.shape() != [out] {
            return Err(Error::dim(format!(
                "bias shape {:?} does not match {out} outputs",
                bias.shape()
            )));
        }
        if log_alpha.shape() != [out, inp] {
            return Err(Error::dim(format!(
                "log_alpha shape {:?} does not match weights [{out}, {inp}]",
                log_alpha.shape()
            )));
        }
        let mut layer = VariationalDense {
            w_mean,
            bias,
            log_alpha,
            noise,
        };
        layer.clamp_log_alpha();
        Ok(layer)
    }

    pub fn inputs(&self) -> usize {
        self.w_mean.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.w_mean.shape()[0]
    }

    pub fn num_weights(&self) -> usize {
        self.w_mean.len()
    }

    pub fn clamp_log_alpha(&mut self) {
        for la in self.log_alpha.data_mut() {
            *la = la.clamp(LOG_ALPHA_MIN, LOG_ALPHA_MAX);
        }
    }

    /// `alpha_tilde * w_mean^2`, the per-weight variance scale entering the
    /// pre-activation variance `(x^2) . (alpha_tilde w^2)`.
    pub fn weight_variance(&self) -> Tensor {
        let noise = self.noise;
        self.w_mean
            .zip_with(&self.log_alpha, |w, la| noise.alpha_tilde(la) * w * w)
            .expect("shapes checked at construction")
    }
}
