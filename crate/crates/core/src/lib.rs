//! Variational networks with multiplicative weight noise, the information
//! they store in their weights, and the bounds that information implies.
//!
//! All numbers are `f64`, tensors are row-major. Randomness comes from
//! [`rng::Rng`], a ChaCha8 stream with ziggurat normal sampling, so equal
//! seeds give bit-identical results on every platform.

pub mod data;
pub mod error;
pub mod info;
pub mod nuisance;
pub mod rng;
pub mod tensor;
pub mod vnn;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;
