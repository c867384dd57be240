use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Where a split came from and what was done to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub source: String,
    /// Fraction of labels passed through [`corrupt_labels`].
    pub corruption: f64,
    pub seed: Option<u64>,
}

/// Features plus integer class labels.
///
/// `features` is `[N x d]`, or `[N x H x W]` for images before
/// [`DatasetSplit::flattened`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub provenance: Provenance,
}

impl DatasetSplit {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize, provenance: Provenance) -> Result<Self> {
        if features.rank() < 2 {
            return Err(Error::dim(format!(
                "features must have a sample axis plus feature axes, got {:?}",
                features.shape()
            )));
        }
        if features.rows() != labels.len() {
            return Err(Error::dim(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::input(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(DatasetSplit {
            features,
            labels,
            num_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// `(H, W)` for image-shaped features.
    pub fn image_shape(&self) -> Option<(usize, usize)> {
        match *self.features.shape() {
            [_, h, w] => Some((h, w)),
            _ => None,
        }
    }

    /// Collapses all feature axes into one: `[N x d]`.
    pub fn flattened(&self) -> DatasetSplit {
        let mut out = self.clone();
        let (n, d) = (self.features.rows(), self.features.cols());
        out.features = out.features.reshape(vec![n, d]).expect("same element count");
        out
    }

    pub fn select(&self, indices: &[usize]) -> DatasetSplit {
        DatasetSplit {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            provenance: self.provenance.clone(),
        }
    }

    /// Rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> DatasetSplit {
        let idx: Vec<usize> = (start..end.min(self.len())).collect();
        self.select(&idx)
    }
}

/// Replaces each label, independently with probability `p`, by a uniform
/// draw over all `num_classes` classes (which may equal the original).
pub fn corrupt_labels(labels: &[usize], p: f64, num_classes: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("corruption probability {p} outside [0, 1]")));
    }
    if num_classes == 0 {
        return Err(Error::domain("num_classes must be positive"));
    }
    Ok(labels
        .iter()
        .map(|&y| {
            if rng.uniform() < p {
                rng.below(num_classes)
            } else {
                y
            }
        })
        .collect())
}

/// Class-conditional unit-covariance Gaussians. Class means sit at
/// `margin / sqrt(2)` along mutually orthogonal random directions, so any
/// two means are `margin` apart. When `num_classes > d` orthogonality is
/// impossible and independent random unit directions are used instead.
/// Labels are balanced (`i mod num_classes`) and then shuffled.
pub fn synthetic_gaussian_dataset(
    d: usize,
    n: usize,
    num_classes: usize,
    margin: f64,
    rng: &mut Rng,
) -> Result<DatasetSplit> {
    if d == 0 || n == 0 || num_classes == 0 {
        return Err(Error::input("d, N and num_classes must all be at least 1"));
    }
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        let mut v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        if num_classes <= d {
            for u in &dirs {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        dirs.push(v);
    }
    let offset = margin / std::f64::consts::SQRT_2;
    let mut labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    rng.shuffle(&mut labels);
    let mut data = Vec::with_capacity(n * d);
    for &y in &labels {
        data.extend(dirs[y].iter().map(|&u| offset * u + rng.standard_normal()));
    }
    DatasetSplit::new(
        Tensor::new(vec![n, d], data)?,
        labels,
        num_classes,
        Provenance {
            source: format!("synthetic-gaussian(d={d}, margin={margin})"),
            corruption: 0.0,
            seed: Some(rng.seed()),
        },
    )
}

/// Global (all-feature) standardization fitted on a training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    pub fn fit(split: &DatasetSplit) -> Self {
        let data = split.features.data();
        let n = data.len().max(1) as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Normalizer { mean, std }
    }

    pub fn apply(&self, split: &DatasetSplit) -> DatasetSplit {
        let mut out = split.clone();
        let (m, s) = (self.mean, self.std);
        out.features = split.features.map_with(|v| (v - m) / s);
        out
    }

    pub fn apply_tensor(&self, t: &Tensor) -> Tensor {
        let (m, s) = (self.mean, self.std);
        t.map_with(|v| (v - m) / s)
    }
}
