use std::path::Path;
use std::time::Instant;

use ibw_core::data::{save_checkpoint, Checkpoint, DatasetSplit, Normalizer};
use ibw_core::nuisance::{
    estimate_mi, generate_cluttered, stack_samples, synthetic_correlated_gaussian, true_gaussian_mi, DiscConfig,
    MIEstimate, Pairs,
};
use ibw_core::vnn::{evaluate, forward_deterministic_layers, init_network, train, EvalMode, Layer, NetworkState};
use ibw_core::{Rng, Tensor};
use rayon::prelude::*;

use crate::config::{DataSource, ExperimentConfig};
use crate::pipeline::{load_pool, network_spec, sweep_exit_code};
use crate::records::{write_csv, NuisanceRecord, NUISANCE_HEADER};
use crate::{CliError, CliResult};

const STREAM_CLUTTER: u64 = 30;
const STREAM_INIT: u64 = 31;
const STREAM_DISC: u64 = 32;
const STREAM_CALIBRATION: u64 = 33;
const STREAM_LABEL: u64 = 34;

/// Cluttered training and estimation splits (normalized) with the clutter
/// masks of the estimation split.
pub struct ClutteredData {
    pub train: DatasetSplit,
    pub estimate: DatasetSplit,
    pub estimate_masks: Tensor,
    pub raw_train: DatasetSplit,
    pub train_masks: Tensor,
}

pub fn cluttered_data(cfg: &ExperimentConfig) -> CliResult<ClutteredData> {
    if cfg.data.source != DataSource::Mnist {
        return Err(CliError::config("nuisance-mi needs image data (data.source = \"mnist\")"));
    }
    let nc = &cfg.nuisance;
    let pool = load_pool(cfg)?;
    let need = nc.n_train + nc.n_estimate;
    if need > pool.train.len() {
        return Err(CliError::config(format!(
            "nuisance needs {need} samples, training pool has {}",
            pool.train.len()
        )));
    }
    let mut rng = Rng::new(cfg.seed).derive(STREAM_CLUTTER).derive(nc.clutter.seed);
    let clean = pool.train.slice(0, need);
    let samples = generate_cluttered(&clean, &nc.clutter, &mut rng)?;
    let (train_s, est_s) = samples.split_at(nc.n_train);
    let (raw_train, train_masks) = stack_samples(train_s, clean.num_classes, "cluttered-mnist")?;
    let (raw_est, estimate_masks) = stack_samples(est_s, clean.num_classes, "cluttered-mnist")?;
    let norm = Normalizer::fit(&raw_train);
    Ok(ClutteredData {
        train: norm.apply(&raw_train.flattened()),
        estimate: norm.apply(&raw_est.flattened()),
        estimate_masks,
        raw_train,
        train_masks,
    })
}

/// Output of the last hidden layer (the input of the final dense layer)
/// under the deterministic forward pass.
pub fn last_hidden(net: &NetworkState, x: &Tensor) -> CliResult<Tensor> {
    let last_dense = net
        .layers
        .iter()
        .rposition(|l| matches!(l, Layer::Dense(_)))
        .ok_or_else(|| CliError::failure("network has no dense layer"))?;
    if last_dense == 0 {
        return Err(CliError::config("nuisance-mi needs at least one hidden layer"));
    }
    let mut outs = forward_deterministic_layers(net, x)?;
    Ok(outs.swap_remove(last_dense - 1))
}

fn record(kind: &str, est: &MIEstimate, disc_acc: f64, seconds: f64) -> NuisanceRecord {
    NuisanceRecord {
        kind: kind.to_string(),
        beta: None,
        rho: None,
        mi_nats: est.value,
        se_nats: est.std_error,
        reference_nats: None,
        train_acc: None,
        info_nats_per_sample: None,
        disc_holdout_acc: disc_acc,
        disc_holdout_loss: est.final_loss.unwrap_or(f64::NAN),
        clipped: est.clipped,
        n_pairs: est.n_samples,
        seconds,
        error: String::new(),
    }
}

fn failed(kind: &str, beta: Option<f64>, rho: Option<f64>, e: &CliError) -> NuisanceRecord {
    NuisanceRecord {
        kind: kind.to_string(),
        beta,
        rho,
        mi_nats: f64::NAN,
        se_nats: f64::NAN,
        reference_nats: None,
        train_acc: None,
        info_nats_per_sample: None,
        disc_holdout_acc: f64::NAN,
        disc_holdout_loss: f64::NAN,
        clipped: 0,
        n_pairs: 0,
        seconds: 0.0,
        error: e.message.clone(),
    }
}

/// Trains the classifier at `beta` on the cluttered training split and
/// estimates `I(z; n)` on the estimation split. Initialization, minibatch
/// order, weight noise and discriminator randomness are the same for
/// every `beta`.
pub fn beta_row(cfg: &ExperimentConfig, data: &ClutteredData, beta: f64) -> CliResult<NuisanceRecord> {
    let start = Instant::now();
    let nc = &cfg.nuisance;
    let spec = network_spec(cfg, data.train.feature_dim(), data.train.num_classes);
    let mut net = init_network(&spec, &mut Rng::new(cfg.seed).derive(STREAM_INIT))?;
    let mut tc = cfg.train.to_train_config(&cfg.model, cfg.seed);
    tc.beta = beta;
    tc.epochs = nc.epochs;
    train(&mut net, &data.train, &tc)?;
    let acc = evaluate(&net, &data.train, EvalMode::Deterministic)?.accuracy;
    let z = last_hidden(&net, &data.estimate.features)?;
    let pairs = Pairs::new(z, data.estimate_masks.clone())?;
    let (est, disc) = estimate_mi(&pairs, &nc.discriminator, &mut Rng::new(cfg.seed).derive(STREAM_DISC))?;
    let info = ibw_core::vnn::network_info(&net);
    let mut r = record("beta", &est, disc.holdout_accuracy, 0.0);
    r.beta = Some(beta);
    r.train_acc = Some(acc);
    r.info_nats_per_sample = Some(info / data.train.len() as f64);
    r.seconds = start.elapsed().as_secs_f64();
    Ok(r)
}

/// `I(n; y)` of the generated clutter on the estimation split, with `y`
/// one-hot. Zero by construction.
pub fn label_row(cfg: &ExperimentConfig, data: &ClutteredData) -> CliResult<NuisanceRecord> {
    let start = Instant::now();
    let k = data.estimate.num_classes;
    let mut onehot = Tensor::zeros(&[data.estimate.len(), k]);
    for (i, &y) in data.estimate.labels.iter().enumerate() {
        onehot.row_mut(i)[y] = 1.0;
    }
    let pairs = Pairs::new(onehot, data.estimate_masks.clone())?;
    let (est, disc) = estimate_mi(
        &pairs,
        &cfg.nuisance.discriminator,
        &mut Rng::new(cfg.seed).derive(STREAM_LABEL),
    )?;
    let mut r = record("label", &est, disc.holdout_accuracy, start.elapsed().as_secs_f64());
    r.reference_nats = Some(0.0);
    Ok(r)
}

pub fn calibration_config(cfg: &ExperimentConfig) -> DiscConfig {
    DiscConfig {
        hidden: cfg.nuisance.calibration_hidden.clone(),
        ..cfg.nuisance.discriminator.clone()
    }
}

/// Density-ratio estimate on `calibration_samples` bivariate normal pairs
/// at correlation `rho`, against the exact value.
pub fn calibration_row(cfg: &ExperimentConfig, rho: f64) -> CliResult<NuisanceRecord> {
    let start = Instant::now();
    let mut rng = Rng::new(cfg.seed).derive(STREAM_CALIBRATION);
    let pairs = synthetic_correlated_gaussian(rho, cfg.nuisance.calibration_samples, &mut rng)?;
    let (est, disc) = estimate_mi(&pairs, &calibration_config(cfg), &mut rng)?;
    let mut r = record("calibration", &est, disc.holdout_accuracy, start.elapsed().as_secs_f64());
    r.rho = Some(rho);
    r.reference_nats = Some(true_gaussian_mi(rho)?);
    Ok(r)
}

enum Task {
    Beta(f64),
    Calibration(f64),
    Label,
}

/// Writes `nuisance_mi.csv` and the cluttered training split as
/// `cluttered.ckpt`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<i32> {
    cfg.validate()?;
    crate::prepare_out_dir(out)?;
    let nc = &cfg.nuisance;
    let data = cluttered_data(cfg)?;
    let ckpt = Checkpoint::from_dataset(&data.raw_train, vec![("nuisance".into(), data.train_masks.clone())]);
    save_checkpoint(out.join("cluttered.ckpt"), &ckpt)?;

    let mut tasks: Vec<Task> = nc.betas.iter().map(|&b| Task::Beta(b)).collect();
    tasks.extend(nc.calibration_rhos.iter().map(|&r| Task::Calibration(r)));
    tasks.push(Task::Label);
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::failure(format!("thread pool: {e}")))?;
    let results: Vec<(NuisanceRecord, Option<CliError>)> = threads.install(|| {
        tasks
            .par_iter()
            .map(|t| {
                let (res, kind, beta, rho) = match *t {
                    Task::Beta(b) => (beta_row(cfg, &data, b), "beta", Some(b), None),
                    Task::Calibration(r) => (calibration_row(cfg, r), "calibration", None, Some(r)),
                    Task::Label => (label_row(cfg, &data), "label", None, None),
                };
                match res {
                    Ok(r) => (r, None),
                    Err(e) => (failed(kind, beta, rho, &e), Some(e)),
                }
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (r, e) in results {
        rows.push(r);
        errors.extend(e);
    }
    rows.sort_by(|a, b| a.key_cmp(b));
    write_csv(&out.join("nuisance_mi.csv"), NUISANCE_HEADER, &rows)?;
    for r in &rows {
        println!(
            "{:<11} beta={:<6} rho={:<5} I={:.4} +- {:.4} nats ref={} train_acc={}",
            r.kind,
            r.beta.map_or("-".into(), |v| v.to_string()),
            r.rho.map_or("-".into(), |v| v.to_string()),
            r.mi_nats,
            r.se_nats,
            r.reference_nats.map_or("-".into(), |v| format!("{v:.4}")),
            r.train_acc.map_or("-".into(), |v| format!("{v:.4}")),
        );
        if !r.error.is_empty() {
            eprintln!("{} row failed: {}", r.kind, r.error);
        }
    }
    Ok(sweep_exit_code(&errors))
}
