//! Nuisance-perturbed data `x = f(y, n)` and estimation of how much a
//! representation `z` still knows about the nuisance `n`.

pub mod clutter;
pub mod disc;

pub use crate::info::MIEstimate;
pub use clutter::{generate_cluttered, stack_samples, ClutterConfig, NuisanceSample};
pub use disc::{
    estimate_mi, estimate_mi_density_ratio, synthetic_correlated_gaussian, train_discriminator, true_gaussian_mi,
    DiscConfig, Discriminator, FeatureScaler, Pairs, CLASS_JOINT, CLASS_PRODUCT, D_CLIP,
};
