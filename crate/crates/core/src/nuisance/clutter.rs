use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplit, Provenance};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClutterConfig {
    pub num_squares: usize,
    pub square_size: usize,
    pub intensity: f64,
    pub seed: u64,
}

impl Default for ClutterConfig {
    fn default() -> Self {
        ClutterConfig {
            num_squares: 10,
            square_size: 4,
            intensity: 1.0,
            seed: 0,
        }
    }
}

/// One cluttered image `x = max(clean, intensity * n)` with its label and
/// the clutter mask `n` (entries 0 or 1).
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSample {
    pub x: Tensor,
    pub y: usize,
    pub n: Tensor,
}

/// Overlays `num_squares` filled squares per image. Corners are uniform
/// over all positions where the square fits; squares may overlap each
/// other and the digit.
///
/// Draws come from `rng`; `config.seed` is only recorded.
pub fn generate_cluttered(clean: &DatasetSplit, config: &ClutterConfig, rng: &mut Rng) -> Result<Vec<NuisanceSample>> {
    let (h, w) = clean
        .image_shape()
        .ok_or_else(|| Error::dim(format!("expected [N x H x W] images, got {:?}", clean.features.shape())))?;
    let s = config.square_size;
    if s == 0 || s > h.min(w) {
        return Err(Error::Config(format!("square size {s} does not fit a {h}x{w} image")));
    }
    if !(0.0..=1.0).contains(&config.intensity) {
        return Err(Error::Config(format!("intensity {} outside [0, 1]", config.intensity)));
    }
    let mut out = Vec::with_capacity(clean.len());
    for i in 0..clean.len() {
        let mut mask = vec![0.0; h * w];
        for _ in 0..config.num_squares {
            let top = rng.below(h - s + 1);
            let left = rng.below(w - s + 1);
            for r in top..top + s {
                mask[r * w + left..r * w + left + s].iter_mut().for_each(|v| *v = 1.0);
            }
        }
        let x: Vec<f64> = clean.features.row(i)
            .iter()
            .zip(&mask)
            .map(|(&p, &m)| p.max(m * config.intensity))
            .collect();
        out.push(NuisanceSample {
            x: Tensor::new(vec![h, w], x)?,
            y: clean.labels[i],
            n: Tensor::new(vec![h, w], mask)?,
        });
    }
    Ok(out)
}

/// Stacks samples into an image split `[N x H x W]` and the matching
/// flattened clutter masks `[N x H*W]`.
pub fn stack_samples(samples: &[NuisanceSample], num_classes: usize, source: &str) -> Result<(DatasetSplit, Tensor)> {
    let Some(first) = samples.first() else {
        return Err(Error::input("no samples"));
    };
    let (h, w) = (first.x.shape()[0], first.x.shape()[1]);
    let mut x = Vec::with_capacity(samples.len() * h * w);
    let mut n = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        x.extend_from_slice(s.x.data());
        n.extend_from_slice(s.n.data());
    }
    let split = DatasetSplit::new(
        Tensor::new(vec![samples.len(), h, w], x)?,
        samples.iter().map(|s| s.y).collect(),
        num_classes,
        Provenance {
            source: source.to_string(),
            corruption: 0.0,
            seed: None,
        },
    )?;
    Ok((split, Tensor::new(vec![samples.len(), h * w], n)?))
}
