//! Feed-forward networks whose dense layers carry multiplicative weight
//! noise, trained with the local reparameterization of the pre-activations.

pub mod layer;
pub mod loss;
pub mod network;
pub mod optim;
pub mod train;

pub use layer::{NoiseModel, VariationalDense, LOG_ALPHA_MAX, LOG_ALPHA_MIN};
pub use loss::{backward, log_softmax, loss_and_grad, loss_and_grad_with_noise, network_info, DenseGrads, Gradients, LossOutput};
pub use network::{
    forward_deterministic, forward_deterministic_layers, forward_stochastic, forward_with_noise, init_network,
    sample_noise, Activation, ForwardTrace, Layer, LayerSpec, NetworkSpec, NetworkState, NoiseSample,
};
pub use optim::{sgd_step, SgdState};
pub use train::{evaluate, train, EpochRecord, EvalMode, EvalResult, LrSchedule, Plateau, TrainConfig, TrainHistory};
