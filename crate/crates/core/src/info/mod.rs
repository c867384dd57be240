//! Information quantities and bounds: information in the weights, the
//! weight/activation duality, flat minima and PAC-Bayes.
//!
//! Every `info` value is defined only up to one shared additive constant.

pub mod bounds;
pub mod duality;
pub mod flat;
pub mod gaussmult;
pub mod weights;

use serde::{Deserialize, Serialize};

pub use bounds::{bound_fn, bound_report, multilayer_bound, pac_bayes_bound, single_layer_bound, BoundReport, SingleLayerBound};
pub use duality::{duality_closed_form, gaussian_kl, mc_mi_gaussian, GaussianStats};
pub use flat::{flat_minima_bound, flat_minima_exact, grid_search_alpha, hessian_diagonal, optimal_alpha_quadratic};
pub use gaussmult::{kl_gaussmult_direct, kl_gaussmult_numeric};
pub use weights::{effective_alpha, info_in_weights, info_report, InfoReport};

/// A Monte Carlo estimate of a mutual information in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Held-out loss of the discriminator, for density-ratio estimates.
    pub final_loss: Option<f64>,
    /// Samples whose discriminator output had to be clipped.
    pub clipped: usize,
}

impl MIEstimate {
    /// Mean and standard error of per-sample contributions.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n.max(1) as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        MIEstimate {
            value: mean,
            std_error: (var / n.max(1) as f64).sqrt(),
            n_samples: n,
            final_loss: None,
            clipped: 0,
        }
    }

    /// Combined standard error of the difference of two estimates.
    pub fn combined_se(&self, other: &MIEstimate) -> f64 {
        (self.std_error.powi(2) + other.std_error.powi(2)).sqrt()
    }
}
