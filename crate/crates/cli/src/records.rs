//! CSV row types. Headers are fixed by the field order below.
//!
//! `sweep` rows (`sweep-beta-n`, `sweep-corruption`, and the one-row
//! `record.csv` of `train`):
//!
//! ```text
//! label_mode,beta,n,corruption,seed,epochs_run,train_acc,train_acc_det,test_acc,ce_nats_per_sample,info_nats,info_nats_per_sample,seconds,error
//! ```
//!
//! `train_acc` and `ce_nats_per_sample` are the last epoch's entries of the
//! training history: running accuracy and mean CE of the noisy forward
//! passes (for a run of zero epochs, the deterministic values).
//! `train_acc_det` and `test_acc` use the deterministic (mean-weight)
//! forward pass. A failed cell has `NaN` metrics and a nonempty `error`.
//!
//! `nuisance-mi` rows:
//!
//! ```text
//! kind,beta,rho,mi_nats,se_nats,reference_nats,train_acc,info_nats_per_sample,disc_holdout_acc,disc_holdout_loss,clipped,n_pairs,seconds,error
//! ```
//!
//! `kind` is `beta` (I(z;n) of a classifier trained at `beta`),
//! `calibration` (bivariate normal at correlation `rho`, `reference_nats`
//! is the exact MI) or `label` (I(n;y) of the generated clutter, reference
//! 0). Empty fields mean "not applicable".
//!
//! `history` rows (per epoch of `train`):
//!
//! ```text
//! epoch,ce_nats_per_sample,train_acc,info_nats,info_nats_per_sample,seconds
//! ```

use std::path::Path;

use ibw_core::vnn::EpochRecord;
use serde::{Deserialize, Deserializer, Serialize};

use crate::CliError;

/// Reads a missing or empty float as NaN, so rows of failed cells survive
/// a trip through JSON (where NaN is written as `null`).
fn nan_if_missing<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

pub const SWEEP_HEADER: &[&str] = &[
    "label_mode",
    "beta",
    "n",
    "corruption",
    "seed",
    "epochs_run",
    "train_acc",
    "train_acc_det",
    "test_acc",
    "ce_nats_per_sample",
    "info_nats",
    "info_nats_per_sample",
    "seconds",
    "error",
];

pub const NUISANCE_HEADER: &[&str] = &[
    "kind",
    "beta",
    "rho",
    "mi_nats",
    "se_nats",
    "reference_nats",
    "train_acc",
    "info_nats_per_sample",
    "disc_holdout_acc",
    "disc_holdout_loss",
    "clipped",
    "n_pairs",
    "seconds",
    "error",
];

pub const HISTORY_HEADER: &[&str] = &[
    "epoch",
    "ce_nats_per_sample",
    "train_acc",
    "info_nats",
    "info_nats_per_sample",
    "seconds",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub label_mode: String,
    #[serde(deserialize_with = "nan_if_missing")]
    pub beta: f64,
    pub n: usize,
    #[serde(deserialize_with = "nan_if_missing")]
    pub corruption: f64,
    pub seed: u64,
    pub epochs_run: usize,
    #[serde(deserialize_with = "nan_if_missing")]
    pub train_acc: f64,
    #[serde(deserialize_with = "nan_if_missing")]
    pub train_acc_det: f64,
    #[serde(deserialize_with = "nan_if_missing")]
    pub test_acc: f64,
    #[serde(deserialize_with = "nan_if_missing")]
    pub ce_nats_per_sample: f64,
    #[serde(deserialize_with = "nan_if_missing")]
    pub info_nats: f64,
    #[serde(deserialize_with = "nan_if_missing")]
    pub info_nats_per_sample: f64,
    #[serde(deserialize_with = "nan_if_missing")]
    pub seconds: f64,
    pub error: String,
}

impl SweepRecord {
    pub fn failed(label_mode: &str, beta: f64, n: usize, corruption: f64, seed: u64, error: String) -> Self {
        SweepRecord {
            label_mode: label_mode.to_string(),
            beta,
            n,
            corruption,
            seed,
            epochs_run: 0,
            train_acc: f64::NAN,
            train_acc_det: f64::NAN,
            test_acc: f64::NAN,
            ce_nats_per_sample: f64::NAN,
            info_nats: f64::NAN,
            info_nats_per_sample: f64::NAN,
            seconds: 0.0,
            error,
        }
    }

    /// Orders rows by cell key.
    pub fn key_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.label_mode
            .cmp(&other.label_mode)
            .then(self.n.cmp(&other.n))
            .then(self.beta.total_cmp(&other.beta))
            .then(self.corruption.total_cmp(&other.corruption))
            .then(self.seed.cmp(&other.seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceRecord {
    pub kind: String,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    #[serde(deserialize_with = "nan_if_missing")]
    pub mi_nats: f64,
    #[serde(deserialize_with = "nan_if_missing")]
    pub se_nats: f64,
    pub reference_nats: Option<f64>,
    pub train_acc: Option<f64>,
    pub info_nats_per_sample: Option<f64>,
    #[serde(deserialize_with = "nan_if_missing")]
    pub disc_holdout_acc: f64,
    #[serde(deserialize_with = "nan_if_missing")]
    pub disc_holdout_loss: f64,
    pub clipped: usize,
    pub n_pairs: usize,
    #[serde(deserialize_with = "nan_if_missing")]
    pub seconds: f64,
    pub error: String,
}

impl NuisanceRecord {
    pub fn key_cmp(&self, other: &Self) -> std::cmp::Ordering {
        let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => a.total_cmp(&b),
            (a, b) => a.is_some().cmp(&b.is_some()),
        };
        self.kind
            .cmp(&other.kind)
            .then(opt(self.beta, other.beta))
            .then(opt(self.rho, other.rho))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    #[serde(deserialize_with = "nan_if_missing")]
    pub ce_nats_per_sample: f64,
    #[serde(deserialize_with = "nan_if_missing")]
    pub train_acc: f64,
    #[serde(deserialize_with = "nan_if_missing")]
    pub info_nats: f64,
    #[serde(deserialize_with = "nan_if_missing")]
    pub info_nats_per_sample: f64,
    #[serde(deserialize_with = "nan_if_missing")]
    pub seconds: f64,
}

impl From<&EpochRecord> for HistoryRow {
    fn from(r: &EpochRecord) -> Self {
        HistoryRow {
            epoch: r.epoch,
            ce_nats_per_sample: r.ce_nats_per_sample,
            train_acc: r.train_acc,
            info_nats: r.info_nats,
            info_nats_per_sample: r.info_nats_per_sample,
            seconds: r.seconds,
        }
    }
}

/// Writes `rows` under `header`. The header is written even when there
/// are no rows.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::failure(format!("writing {}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::failure(format!("writing {}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Sweep,
    Nuisance,
    History,
}

pub fn detect_kind(header: &csv::StringRecord) -> Option<CsvKind> {
    let fields: Vec<&str> = header.iter().collect();
    if fields == SWEEP_HEADER {
        Some(CsvKind::Sweep)
    } else if fields == NUISANCE_HEADER {
        Some(CsvKind::Nuisance)
    } else if fields == HISTORY_HEADER {
        Some(CsvKind::History)
    } else {
        None
    }
}

/// Parsed contents of one emitted CSV.
#[derive(Debug, Clone, PartialEq)]
pub enum CsvFile {
    Sweep(Vec<SweepRecord>),
    Nuisance(Vec<NuisanceRecord>),
    History(Vec<HistoryRow>),
}

fn read_rows<T: for<'de> Deserialize<'de>>(
    rdr: &mut csv::Reader<std::fs::File>,
    header: &csv::StringRecord,
    path: &Path,
) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                let row = rec
                    .deserialize(Some(header))
                    .map_err(|e| CliError::config(format!("{}:{line}: {e}", path.display())))?;
                out.push(row);
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(CliError::config(format!("{}:{line}: {e}", path.display())));
            }
        }
    }
    Ok(out)
}

/// Reads any CSV this crate writes. Malformed input is a config-class
/// error (exit 2) naming the file and line.
pub fn read_csv(path: &Path) -> Result<CsvFile, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| CliError::config(format!("{}:1: {e}", path.display())))?
        .clone();
    match detect_kind(&header) {
        Some(CsvKind::Sweep) => Ok(CsvFile::Sweep(read_rows(&mut rdr, &header, path)?)),
        Some(CsvKind::Nuisance) => Ok(CsvFile::Nuisance(read_rows(&mut rdr, &header, path)?)),
        Some(CsvKind::History) => Ok(CsvFile::History(read_rows(&mut rdr, &header, path)?)),
        None => Err(CliError::config(format!("{}:1: unrecognized header", path.display()))),
    }
}
