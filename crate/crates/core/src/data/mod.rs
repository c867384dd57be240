//! Datasets: IDX loading, synthetic data, label corruption and
//! checkpoints.

pub mod checkpoint;
pub mod dataset;
pub mod idx;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use dataset::{corrupt_labels, synthetic_gaussian_dataset, DatasetSplit, Normalizer, Provenance};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels};
