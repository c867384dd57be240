use serde::{Deserialize, Serialize};

use super::weights::{effective_alpha, info_in_weights};
use crate::error::{Error, Result};
use crate::vnn::{NetworkState, VariationalDense};

/// `B(alpha) = 1/2 ln(1 + 1/(e^alpha - 1)) = -1/2 ln(1 - e^-alpha)`, the
/// per-component information a layer with effective noise `alpha` can pass.
pub fn bound_fn(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("bound needs alpha > 0, got {alpha}")));
    }
    let log1mexp = if alpha < std::f64::consts::LN_2 {
        (-(-alpha).exp_m1()).ln()
    } else {
        (-(-alpha).exp()).ln_1p()
    };
    Ok(-0.5 * log1mexp)
}

/// Per-component and whole-layer information interval `[B, B + 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleLayerBound {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
    pub dim_z: usize,
    pub total_lower: f64,
    pub total_upper: f64,
}

pub fn single_layer_bound(layer: &VariationalDense, dim_x: usize) -> Result<SingleLayerBound> {
    if dim_x == 0 {
        return Err(Error::domain("dim_x must be at least 1"));
    }
    let alpha = effective_alpha(info_in_weights(&layer.log_alpha), layer.num_weights())?;
    interval(alpha, layer.outputs())
}

pub(crate) fn interval(alpha: f64, dim_z: usize) -> Result<SingleLayerBound> {
    let lower = bound_fn(alpha)?;
    let upper = lower + 1.0;
    Ok(SingleLayerBound {
        alpha,
        lower,
        upper,
        dim_z,
        total_lower: lower * dim_z as f64,
        total_upper: upper * dim_z as f64,
    })
}

/// `min_k dim(z_k) (B(alpha_k) + 1)` over the noisy dense layers, with
/// `z_k` the output of layer `k`.
pub fn multilayer_bound(net: &NetworkState) -> Result<f64> {
    let mut best: Option<f64> = None;
    for d in net.dense_layers().filter(|d| d.noise.is_noisy()) {
        let b = single_layer_bound(d, d.inputs())?.total_upper;
        best = Some(best.map_or(b, |m| m.min(b)));
    }
    best.ok_or_else(|| Error::input("network has no noisy dense layer"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub per_layer: Vec<SingleLayerBound>,
    pub multilayer_nats: f64,
    pub flat_minima_nats: Option<f64>,
    pub pac_bayes: Option<f64>,
}

pub fn bound_report(net: &NetworkState) -> Result<BoundReport> {
    let per_layer = net
        .dense_layers()
        .filter(|d| d.noise.is_noisy())
        .map(|d| single_layer_bound(d, d.inputs()))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundReport {
        per_layer,
        multilayer_nats: multilayer_bound(net)?,
        flat_minima_nats: None,
        pac_bayes: None,
    })
}

/// Expected test loss bound
/// `(ce_total + lambda L_max kl) / (N (1 - 1/(2 lambda)))`.
pub fn pac_bayes_bound(ce_total_nats: f64, kl_nats: f64, n: usize, lambda: f64, l_max: f64) -> Result<f64> {
    if !(lambda > 0.5) {
        return Err(Error::domain(format!("lambda must exceed 1/2, got {lambda}")));
    }
    if n == 0 {
        return Err(Error::domain("N must be at least 1"));
    }
    if !(l_max > 0.0) {
        return Err(Error::domain(format!("L_max must be positive, got {l_max}")));
    }
    Ok((ce_total_nats + lambda * l_max * kl_nats) / (n as f64 * (1.0 - 1.0 / (2.0 * lambda))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Tensor;
    use crate::vnn::{init_network, Activation, NetworkSpec, NoiseModel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn bound_examples() {
        assert_abs_diff_eq!(bound_fn(2f64.ln()).unwrap(), 0.346574, epsilon = 1e-6);
        let direct = 0.5 * (1.0 + 1.0 / (0.1f64.exp() - 1.0)).ln();
        assert_abs_diff_eq!(bound_fn(0.1).unwrap(), direct, epsilon = 1e-12);
        assert_abs_diff_eq!(bound_fn(0.1).unwrap(), 1.176084, epsilon = 1e-6);
        assert!(bound_fn(800.0).unwrap() < 1e-300);
        assert!(matches!(bound_fn(0.0), Err(Error::Domain(_))));
        assert!(bound_fn(-1.0).is_err());
    }

    #[test]
    fn bound_shape_on_log_grid() {
        let grid: Vec<f64> = (-40..=20).map(|i| 10f64.powf(i as f64 / 5.0)).collect();
        let vals: Vec<f64> = grid.iter().map(|&a| bound_fn(a).unwrap()).collect();
        assert!(vals.iter().all(|&v| v >= 0.0));
        assert!(vals.windows(2).all(|w| w[1] < w[0] || w[1] == 0.0));
        assert!(vals[0] > 9.0);
        assert!(*vals.last().unwrap() < 1e-40);
    }

    #[test]
    fn single_layer_interval() {
        let w = Tensor::full(&[2, 3], 0.5);
        let layer = VariationalDense::new(w, Tensor::zeros(&[2]), Tensor::zeros(&[2, 3]), NoiseModel::LogNormal).unwrap();
        let b = single_layer_bound(&layer, 3).unwrap();
        assert_abs_diff_eq!(b.alpha, 1.0);
        assert_abs_diff_eq!(b.lower, 0.229, epsilon = 5e-4);
        assert_abs_diff_eq!(b.upper, 1.229, epsilon = 5e-4);
        assert_eq!(b.upper - b.lower, 1.0);
        assert_abs_diff_eq!(b.total_upper, 2.0 * b.upper, epsilon = 1e-12);

        // near-deterministic: lower end grows without bound
        let tight = interval(1e-12, 1).unwrap();
        assert!(tight.upper > 13.0);
    }

    #[test]
    fn multilayer_examples() {
        // effective alpha = exp(-I/dim) = exp(mean log_alpha / 2)
        let la = 2.0 * 2f64.ln().ln();
        let layer = VariationalDense::new(
            Tensor::full(&[4, 3], 1.0),
            Tensor::zeros(&[4]),
            Tensor::full(&[4, 3], la),
            NoiseModel::LogNormal,
        );
        let layer = layer.unwrap();
        let net = NetworkState::from_layers(vec![
            crate::vnn::Layer::Dense(layer.clone()),
            crate::vnn::Layer::SoftmaxHead,
        ])
        .unwrap();
        assert_abs_diff_eq!(multilayer_bound(&net).unwrap(), 5.386294, epsilon = 1e-6);

        let spec = NetworkSpec::mlp(&[6, 5, 4], Activation::Relu, NoiseModel::LogNormal, -1.0);
        let two = init_network(&spec, &mut Rng::new(0)).unwrap();
        let first_only = NetworkState::from_layers(vec![two.layers[0].clone(), crate::vnn::Layer::SoftmaxHead]).unwrap();
        assert!(multilayer_bound(&two).unwrap() <= multilayer_bound(&first_only).unwrap());
    }

    #[test]
    fn multilayer_needs_noise() {
        let spec = NetworkSpec::mlp(&[3, 2], Activation::Relu, NoiseModel::None, -1.0);
        let net = init_network(&spec, &mut Rng::new(0)).unwrap();
        assert!(multilayer_bound(&net).is_err());
    }

    #[test]
    fn pac_bayes_examples() {
        let v = pac_bayes_bound(50.0, 10.0, 100, 1.0, 10f64.ln()).unwrap();
        assert_abs_diff_eq!(v, 1.460517, epsilon = 1e-6);
        assert_abs_diff_eq!(pac_bayes_bound(50.0, 0.0, 100, 1.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(pac_bayes_bound(1.0, 1.0, 1, 0.5, 1.0), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn pac_bayes_increasing_in_kl(kl in 0.0f64..1e3, dk in 1e-3f64..10.0, lambda in 0.51f64..10.0) {
            let a = pac_bayes_bound(10.0, kl, 50, lambda, 2.0).unwrap();
            let b = pac_bayes_bound(10.0, kl + dk, 50, lambda, 2.0).unwrap();
            prop_assert!(b > a);
        }

        #[test]
        fn bound_decreasing(a in 1e-6f64..30.0, f in 1.001f64..3.0) {
            prop_assert!(bound_fn(a * f).unwrap() < bound_fn(a).unwrap());
        }
    }
}
