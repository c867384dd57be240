//! Data preparation and single-cell training shared by the commands.

use std::time::Instant;

use ibw_core::data::{corrupt_labels, load_idx, synthetic_gaussian_dataset, DatasetSplit, Normalizer};
use ibw_core::vnn::{evaluate, init_network, train, EvalMode, NetworkSpec, NetworkState, TrainConfig, TrainHistory};
use ibw_core::Rng;
use rayon::prelude::*;

use crate::config::{DataSource, ExperimentConfig, LabelMode};
use crate::records::SweepRecord;
use crate::{CliError, CliResult};

const STREAM_DATA: u64 = 10;
const STREAM_CORRUPT: u64 = 11;
const STREAM_INIT: u64 = 12;

/// Training pool and held-out test split, unnormalized.
#[derive(Debug, Clone)]
pub struct DataPool {
    pub train: DatasetSplit,
    pub test: DatasetSplit,
}

pub fn load_pool(cfg: &ExperimentConfig) -> CliResult<DataPool> {
    let d = &cfg.data;
    let all = match d.source {
        DataSource::Mnist => load_idx(&d.images, &d.labels)?,
        DataSource::Synthetic => {
            let s = &d.synthetic;
            let mut rng = Rng::new(cfg.seed).derive(STREAM_DATA);
            synthetic_gaussian_dataset(s.dim, s.pool + d.test_size, s.num_classes, s.margin, &mut rng)?
        }
    };
    if all.len() <= d.test_size {
        return Err(CliError::config(format!(
            "dataset has {} samples, test split needs {} plus a training pool",
            all.len(),
            d.test_size
        )));
    }
    let cut = all.len() - d.test_size;
    Ok(DataPool {
        train: all.slice(0, cut),
        test: all.slice(cut, all.len()),
    })
}

/// One point of a sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// `real`, `random` or `corrupted`; recorded as given.
    pub label_mode: String,
    pub beta: f64,
    pub n: usize,
    pub corruption: f64,
    pub seed: u64,
}

impl Cell {
    pub fn from_mode(mode: LabelMode, beta: f64, n: usize, seed: u64, real_corruption: f64) -> Self {
        Cell {
            label_mode: mode.as_str().to_string(),
            beta,
            n,
            corruption: match mode {
                LabelMode::Random => 1.0,
                LabelMode::Real => real_corruption,
            },
            seed,
        }
    }
}

/// Normalized, possibly corrupted training set of a cell plus the matching
/// normalized test split.
pub fn cell_data(pool: &DataPool, cell: &Cell) -> CliResult<(DatasetSplit, DatasetSplit, Normalizer)> {
    if cell.n > pool.train.len() {
        return Err(CliError::config(format!(
            "N = {} exceeds the training pool of {}",
            cell.n,
            pool.train.len()
        )));
    }
    let train = pool.train.slice(0, cell.n).flattened();
    let norm = Normalizer::fit(&train);
    let mut train = norm.apply(&train);
    let test = norm.apply(&pool.test.flattened());
    if cell.corruption > 0.0 {
        let mut rng = Rng::new(cell.seed).derive(STREAM_CORRUPT);
        train.labels = corrupt_labels(&train.labels, cell.corruption, train.num_classes, &mut rng)?;
        train.provenance.corruption = cell.corruption;
        train.provenance.seed = Some(cell.seed);
    }
    Ok((train, test, norm))
}

pub fn network_spec(cfg: &ExperimentConfig, input_dim: usize, num_classes: usize) -> NetworkSpec {
    let mut sizes = vec![input_dim];
    sizes.extend(&cfg.model.hidden);
    sizes.push(num_classes);
    NetworkSpec::mlp(&sizes, cfg.model.activation, cfg.model.noise, cfg.model.init_log_alpha)
}

pub struct CellRun {
    pub record: SweepRecord,
    pub net: NetworkState,
    pub history: TrainHistory,
    pub normalizer: Normalizer,
}

/// Trains one cell. `train_cfg.beta` and `train_cfg.seed` are taken from
/// the cell.
pub fn run_cell(pool: &DataPool, cfg: &ExperimentConfig, cell: &Cell, train_cfg: &TrainConfig) -> CliResult<CellRun> {
    let start = Instant::now();
    let (train_set, test_set, normalizer) = cell_data(pool, cell)?;
    let spec = network_spec(cfg, train_set.feature_dim(), train_set.num_classes);
    let mut net = init_network(&spec, &mut Rng::new(cell.seed).derive(STREAM_INIT))?;
    let tc = TrainConfig {
        beta: cell.beta,
        seed: cell.seed,
        ..train_cfg.clone()
    };
    let history = train(&mut net, &train_set, &tc)?;
    let tr = evaluate(&net, &train_set, EvalMode::Deterministic)?;
    let te = evaluate(&net, &test_set, EvalMode::Deterministic)?;
    let last = history.last();
    let info = ibw_core::vnn::network_info(&net);
    let record = SweepRecord {
        label_mode: cell.label_mode.clone(),
        beta: cell.beta,
        n: cell.n,
        corruption: cell.corruption,
        seed: cell.seed,
        epochs_run: history.len(),
        train_acc: last.map_or(tr.accuracy, |r| r.train_acc),
        train_acc_det: tr.accuracy,
        test_acc: te.accuracy,
        ce_nats_per_sample: last.map_or(tr.ce_nats_per_sample, |r| r.ce_nats_per_sample),
        info_nats: info,
        info_nats_per_sample: info / cell.n as f64,
        seconds: start.elapsed().as_secs_f64(),
        error: String::new(),
    };
    Ok(CellRun {
        record,
        net,
        history,
        normalizer,
    })
}

/// Runs every cell on a pool of `jobs` threads. Rows come back sorted by
/// cell key; a failing cell becomes a row with its error message.
pub fn run_sweep(
    pool: &DataPool,
    cfg: &ExperimentConfig,
    cells: &[Cell],
    train_cfg: &TrainConfig,
) -> CliResult<(Vec<SweepRecord>, Vec<CliError>)> {
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::failure(format!("thread pool: {e}")))?;
    let results: Vec<(SweepRecord, Option<CliError>)> = threads.install(|| {
        cells
            .par_iter()
            .map(|c| match run_cell(pool, cfg, c, train_cfg) {
                Ok(run) => (run.record, None),
                Err(e) => (
                    SweepRecord::failed(&c.label_mode, c.beta, c.n, c.corruption, c.seed, e.message.clone()),
                    Some(e),
                ),
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (r, e) in results {
        rows.push(r);
        errors.extend(e);
    }
    rows.sort_by(|a, b| a.key_cmp(b));
    Ok((rows, errors))
}

/// Exit code for a sweep that produced `errors`.
pub fn sweep_exit_code(errors: &[CliError]) -> i32 {
    if errors.is_empty() {
        0
    } else if errors.iter().all(|e| e.code == crate::EXIT_NON_FINITE) {
        crate::EXIT_NON_FINITE
    } else {
        crate::EXIT_FAILURE
    }
}
