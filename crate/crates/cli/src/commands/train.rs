use std::path::Path;

use ibw_core::data::{save_checkpoint, Checkpoint};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::pipeline::{load_pool, run_cell, Cell};
use crate::records::{write_csv, HistoryRow, HISTORY_HEADER, SWEEP_HEADER};
use crate::CliResult;

/// Trains one cell and writes `history.csv`, `record.csv`, `model.ckpt`
/// and the effective `config.toml` into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<i32> {
    cfg.validate()?;
    crate::prepare_out_dir(out)?;
    let pool = load_pool(cfg)?;
    let cell = Cell::from_mode(cfg.data.label_mode, cfg.train.beta, cfg.data.n_train, cfg.seed, cfg.data.corruption);
    let tc = cfg.train.to_train_config(&cfg.model, cfg.seed);
    let run = run_cell(&pool, cfg, &cell, &tc)?;

    let rows: Vec<HistoryRow> = run.history.records.iter().map(HistoryRow::from).collect();
    write_csv(&out.join("history.csv"), HISTORY_HEADER, &rows)?;
    write_csv(&out.join("record.csv"), SWEEP_HEADER, std::slice::from_ref(&run.record))?;
    let provenance = json!({
        "seed": cfg.seed,
        "beta": cell.beta,
        "n": cell.n,
        "label_mode": cell.label_mode,
        "corruption": cell.corruption,
        "normalizer": run.normalizer,
        "source": format!("{:?}", cfg.data.source).to_lowercase(),
    });
    save_checkpoint(out.join("model.ckpt"), &Checkpoint::from_network(&run.net, provenance))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml())
        .map_err(|e| crate::CliError::failure(format!("writing config.toml: {e}")))?;

    let r = &run.record;
    println!(
        "train: beta={} n={} labels={} epochs={} train_acc={:.4} test_acc={:.4} info/N={:.4} nats ({:.1}s)",
        r.beta, r.n, r.label_mode, r.epochs_run, r.train_acc, r.test_acc, r.info_nats_per_sample, r.seconds
    );
    Ok(0)
}
