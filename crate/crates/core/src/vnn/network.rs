use serde::{Deserialize, Serialize};

use super::layer::{NoiseModel, VariationalDense};
use crate::error::{Error, Result};
use crate::rng::{sample_standard_normal, Rng};
use crate::tensor::{gemm, Tensor, Transpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Elu,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "elu" => Ok(Activation::Elu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Architecture description, serialized into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Relu,
    Elu,
    SoftmaxHead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub noise: NoiseModel,
    pub init_log_alpha: f64,
}

impl NetworkSpec {
    /// Multi-layer perceptron `sizes[0] -> ... -> sizes[last]` with the given
    /// activation between dense layers and a softmax head.
    pub fn mlp(sizes: &[usize], activation: Activation, noise: NoiseModel, init_log_alpha: f64) -> Self {
        let mut layers = Vec::new();
        for (i, pair) in sizes.windows(2).enumerate() {
            layers.push(LayerSpec::Dense {
                inputs: pair[0],
                outputs: pair[1],
            });
            if i + 2 < sizes.len() {
                layers.push(match activation {
                    Activation::Relu => LayerSpec::Relu,
                    Activation::Elu => LayerSpec::Elu,
                });
            }
        }
        layers.push(LayerSpec::SoftmaxHead);
        NetworkSpec {
            layers,
            noise,
            init_log_alpha,
        }
    }

    /// Checks that dense extents chain and returns `(input_dim, output_dim)`.
    pub fn validate(&self) -> Result<(usize, usize)> {
        let mut input = None;
        let mut current: Option<usize> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense { inputs, outputs } => {
                    if *inputs == 0 || *outputs == 0 {
                        return Err(Error::dim(format!("layer {i} has a zero extent")));
                    }
                    if let Some(c) = current {
                        if c != *inputs {
                            return Err(Error::dim(format!(
                                "layer {i} expects {inputs} inputs but previous layer produces {c}"
                            )));
                        }
                    } else {
                        input = Some(*inputs);
                    }
                    current = Some(*outputs);
                }
                LayerSpec::SoftmaxHead if i + 1 != self.layers.len() => {
                    return Err(Error::dim("softmax head must be the last layer"));
                }
                _ => {
                    if current.is_none() {
                        return Err(Error::dim("network must start with a dense layer"));
                    }
                }
            }
        }
        if self.layers.last() != Some(&LayerSpec::SoftmaxHead) {
            return Err(Error::dim("network must end with a softmax head"));
        }
        match (input, current) {
            (Some(i), Some(o)) => Ok((i, o)),
            _ => Err(Error::dim("network has no dense layer")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(VariationalDense),
    Relu,
    Elu,
    SoftmaxHead,
}

/// A chain of layers ending in a softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub layers: Vec<Layer>,
}

impl NetworkState {
    /// Assembles a network from layers, validating the chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let net = NetworkState { layers };
        net.spec().validate()?;
        Ok(net)
    }

    /// Architecture of this network. `init_log_alpha` is reported as the
    /// current mean `log_alpha` over all weights.
    pub fn spec(&self) -> NetworkSpec {
        let mut noise = NoiseModel::None;
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => {
                    noise = d.noise;
                    LayerSpec::Dense {
                        inputs: d.inputs(),
                        outputs: d.outputs(),
                    }
                }
                Layer::Relu => LayerSpec::Relu,
                Layer::Elu => LayerSpec::Elu,
                Layer::SoftmaxHead => LayerSpec::SoftmaxHead,
            })
            .collect();
        let k = self.num_weights().max(1) as f64;
        let init_log_alpha = self.dense_layers().map(|d| d.log_alpha.sum()).sum::<f64>() / k;
        NetworkSpec {
            layers,
            noise,
            init_log_alpha,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dense_layers().next().map_or(0, |d| d.inputs())
    }

    pub fn num_classes(&self) -> usize {
        self.dense_layers().last().map_or(0, |d| d.outputs())
    }

    /// Output dimension of every layer, in order.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dim = self.input_dim();
        self.layers
            .iter()
            .map(|l| {
                if let Layer::Dense(d) = l {
                    dim = d.outputs();
                }
                dim
            })
            .collect()
    }

    pub fn dense_layers(&self) -> impl Iterator<Item = &VariationalDense> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Dense(d) => Some(d),
            _ => None,
        })
    }

    pub fn dense_layers_mut(&mut self) -> impl Iterator<Item = &mut VariationalDense> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::Dense(d) => Some(d),
            _ => None,
        })
    }

    pub fn num_weights(&self) -> usize {
        self.dense_layers().map(VariationalDense::num_weights).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.dense_layers()
            .all(|d| d.w_mean.all_finite() && d.bias.all_finite() && d.log_alpha.all_finite())
    }
}

/// Builds a network: weight means `~ N(0, 2/fan_in)`, zero biases and
/// `log_alpha = spec.init_log_alpha`.
pub fn init_network(spec: &NetworkSpec, rng: &mut Rng) -> Result<NetworkState> {
    spec.validate()?;
    let layers = spec
        .layers
        .iter()
        .map(|l| match *l {
            LayerSpec::Dense { inputs, outputs } => {
                let scale = (2.0 / inputs as f64).sqrt();
                let w = sample_standard_normal(rng, &[outputs, inputs]).map_with(|z| z * scale);
                VariationalDense::new(
                    w,
                    Tensor::zeros(&[outputs]),
                    Tensor::full(&[outputs, inputs], spec.init_log_alpha),
                    spec.noise,
                )
                .map(Layer::Dense)
            }
            LayerSpec::Relu => Ok(Layer::Relu),
            LayerSpec::Elu => Ok(Layer::Elu),
            LayerSpec::SoftmaxHead => Ok(Layer::SoftmaxHead),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkState { layers })
}

/// Standard-normal draws for the local reparameterization, one `[B x out]`
/// tensor per noisy dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample {
    pub per_layer: Vec<Option<Tensor>>,
}

pub fn sample_noise(net: &NetworkState, batch: usize, rng: &mut Rng) -> NoiseSample {
    let per_layer = net
        .layers
        .iter()
        .map(|l| match l {
            Layer::Dense(d) if d.noise.is_noisy() => {
                Some(sample_standard_normal(rng, &[batch, d.outputs()]))
            }
            _ => None,
        })
        .collect();
    NoiseSample { per_layer }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to the network.
    pub input: Tensor,
    /// Output of each layer; the last entry holds the logits.
    pub outputs: Vec<Tensor>,
    /// Pre-activation standard deviation of each noisy dense layer.
    pub std: Vec<Option<Tensor>>,
    pub noise: NoiseSample,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Tensor {
        self.outputs.last().expect("network has layers")
    }

    /// Input seen by layer `i`.
    pub fn layer_input(&self, i: usize) -> &Tensor {
        if i == 0 {
            &self.input
        } else {
            &self.outputs[i - 1]
        }
    }
}

fn check_input(net: &NetworkState, x: &Tensor) -> Result<()> {
    if x.rank() != 2 || x.cols() != net.input_dim() {
        return Err(Error::dim(format!(
            "batch shape {:?} does not match network input dimension {}",
            x.shape(),
            net.input_dim()
        )));
    }
    Ok(())
}

/// Mean pre-activation `x W^T + b`.
pub(crate) fn affine(layer: &VariationalDense, x: &Tensor) -> Tensor {
    let mut out = gemm(x, &layer.w_mean, Transpose::Right).expect("checked extents");
    let b = layer.bias.data();
    let o = layer.outputs();
    for row in out.data_mut().chunks_mut(o) {
        for (v, bj) in row.iter_mut().zip(b) {
            *v += bj;
        }
    }
    out
}

pub(crate) fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn forward_impl(net: &NetworkState, x: &Tensor, noise: NoiseSample) -> Result<ForwardTrace> {
    check_input(net, x)?;
    if noise.per_layer.len() != net.layers.len() {
        return Err(Error::dim("noise sample does not match the network"));
    }
    let mut outputs: Vec<Tensor> = Vec::with_capacity(net.layers.len());
    let mut stds = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let h = if i == 0 { x } else { &outputs[i - 1] };
        let (out, std) = match layer {
            Layer::Dense(d) => {
                let mut mean = affine(d, h);
                match &noise.per_layer[i] {
                    Some(xi) if d.noise.is_noisy() => {
                        if xi.shape() != mean.shape() {
                            return Err(Error::dim(format!(
                                "noise for layer {i} has shape {:?}, expected {:?}",
                                xi.shape(),
                                mean.shape()
                            )));
                        }
                        let h2 = h.map_with(|v| v * v);
                        let var = gemm(&h2, &d.weight_variance(), Transpose::Right)?;
                        let std = var.map_with(f64::sqrt);
                        for ((m, s), e) in mean.data_mut().iter_mut().zip(std.data()).zip(xi.data()) {
                            *m += s * e;
                        }
                        (mean, Some(std))
                    }
                    _ => (mean, None),
                }
            }
            Layer::Relu => (h.map_with(|v| v.max(0.0)), None),
            Layer::Elu => (h.map_with(elu), None),
            Layer::SoftmaxHead => (h.clone(), None),
        };
        outputs.push(out);
        stds.push(std);
    }
    Ok(ForwardTrace {
        input: x.clone(),
        outputs,
        std: stds,
        noise,
    })
}

/// Stochastic forward pass under the local reparameterization: each
/// pre-activation is drawn from `N(x W^T + b, (x^2) (alpha_tilde W^2)^T)`.
pub fn forward_stochastic(net: &NetworkState, x: &Tensor, rng: &mut Rng) -> Result<ForwardTrace> {
    check_input(net, x)?;
    let noise = sample_noise(net, x.rows(), rng);
    forward_impl(net, x, noise)
}

/// Forward pass with caller-provided standard-normal draws.
pub fn forward_with_noise(net: &NetworkState, x: &Tensor, noise: &NoiseSample) -> Result<ForwardTrace> {
    forward_impl(net, x, noise.clone())
}

/// Noise-free pass with `eps = 1` (the noise mean). Returns logits.
pub fn forward_deterministic(net: &NetworkState, x: &Tensor) -> Result<Tensor> {
    Ok(forward_deterministic_layers(net, x)?.pop().expect("network has layers"))
}

/// Noise-free pass returning the output of every layer.
pub fn forward_deterministic_layers(net: &NetworkState, x: &Tensor) -> Result<Vec<Tensor>> {
    let none = NoiseSample {
        per_layer: vec![None; net.layers.len()],
    };
    Ok(forward_impl(net, x, none)?.outputs)
}
