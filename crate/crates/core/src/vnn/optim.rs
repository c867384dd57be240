use super::loss::Gradients;
use super::network::{Layer, NetworkState};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Momentum buffers, one per parameter tensor.
///
/// `log_alpha_lr_scale` multiplies the step size of the `log_alpha`
/// parameters. The information gradient on each `log_alpha` is only
/// `beta/2`, spread over every weight, so at small step counts the noise
/// parameters barely move without it.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    velocity: Vec<Option<[Tensor; 3]>>,
    pub log_alpha_lr_scale: f64,
}

impl SgdState {
    pub fn new(net: &NetworkState) -> Self {
        let velocity = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => Some([
                    Tensor::zeros(d.w_mean.shape()),
                    Tensor::zeros(d.bias.shape()),
                    Tensor::zeros(d.log_alpha.shape()),
                ]),
                _ => None,
            })
            .collect();
        SgdState {
            velocity,
            log_alpha_lr_scale: 1.0,
        }
    }

    pub fn with_log_alpha_lr_scale(mut self, scale: f64) -> Self {
        self.log_alpha_lr_scale = scale;
        self
    }
}

/// Classic momentum: `v <- mu v - lr g; p <- p + v`, then `log_alpha` is
/// clamped back into its range.
pub fn sgd_step(
    net: &mut NetworkState,
    grads: &Gradients,
    state: &mut SgdState,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if grads.layers.len() != net.layers.len() || state.velocity.len() != net.layers.len() {
        return Err(Error::dim("gradients do not match the network"));
    }
    let la_lr = lr * state.log_alpha_lr_scale;
    for ((layer, g), v) in net
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.velocity.iter_mut())
    {
        let (Layer::Dense(d), Some(g), Some(v)) = (layer, g, v) else {
            continue;
        };
        let [vw, vb, vla] = v;
        update(&mut d.w_mean, &g.w_mean, vw, lr, momentum)?;
        update(&mut d.bias, &g.bias, vb, lr, momentum)?;
        if d.noise.is_noisy() {
            update(&mut d.log_alpha, &g.log_alpha, vla, la_lr, momentum)?;
            d.clamp_log_alpha();
        }
    }
    Ok(())
}

fn update(p: &mut Tensor, g: &Tensor, v: &mut Tensor, lr: f64, momentum: f64) -> Result<()> {
    if p.shape() != g.shape() || p.shape() != v.shape() {
        return Err(Error::dim(format!(
            "gradient shape {:?} does not match parameter {:?}",
            g.shape(),
            p.shape()
        )));
    }
    for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
        *vv = momentum * *vv - lr * gv;
        *pv += *vv;
    }
    Ok(())
}
