use std::path::Path;

use ibw_core::vnn::Plateau;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::pipeline::{load_pool, run_sweep, sweep_exit_code, Cell, DataPool};
use crate::records::{write_csv, SweepRecord, SWEEP_HEADER};
use crate::{CliError, CliResult};

fn check_sizes(pool: &DataPool, sizes: impl IntoIterator<Item = usize>) -> CliResult<()> {
    for n in sizes {
        if n > pool.train.len() {
            return Err(CliError::config(format!(
                "N = {n} exceeds the training pool of {}",
                pool.train.len()
            )));
        }
    }
    Ok(())
}

fn report_errors(rows: &[SweepRecord]) {
    for r in rows.iter().filter(|r| !r.error.is_empty()) {
        eprintln!("cell beta={} n={} corruption={} failed: {}", r.beta, r.n, r.corruption, r.error);
    }
}

/// Cells of the beta x N grid, all with the configured seed.
pub fn beta_n_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &n in &cfg.sweep.sizes {
        for &beta in &cfg.sweep.betas {
            cells.push(Cell::from_mode(cfg.sweep.label_mode, beta, n, cfg.seed, 0.0));
        }
    }
    cells
}

/// Writes `sweep_beta_n.csv`.
pub fn run_beta_n(cfg: &ExperimentConfig, out: &Path) -> CliResult<i32> {
    cfg.validate()?;
    crate::prepare_out_dir(out)?;
    let pool = load_pool(cfg)?;
    check_sizes(&pool, cfg.sweep.sizes.iter().copied())?;
    let tc = cfg.train.to_train_config(&cfg.model, cfg.seed);
    let (rows, errors) = run_sweep(&pool, cfg, &beta_n_cells(cfg), &tc)?;
    write_csv(&out.join("sweep_beta_n.csv"), SWEEP_HEADER, &rows)?;
    for r in &rows {
        println!(
            "beta={:<8} n={:<6} train_acc={:.4} test_acc={:.4} info/N={:.4}",
            r.beta, r.n, r.train_acc, r.test_acc, r.info_nats_per_sample
        );
    }
    report_errors(&rows);
    Ok(sweep_exit_code(&errors))
}

#[derive(Debug, Clone, Serialize)]
pub struct CorruptionSummary {
    pub schema_version: u32,
    pub beta: f64,
    pub n: usize,
    pub levels: Vec<f64>,
    pub info_nats_per_sample: Vec<f64>,
    /// Largest drop of info/N between a level and any higher level.
    pub max_decrease: f64,
    /// Info/N at the highest level minus at the lowest.
    pub increase: f64,
    /// Label entropy of fully random 10-class labels, `ln 10`.
    pub reference_nats_per_sample: f64,
}

pub fn corruption_summary(cfg: &ExperimentConfig, rows: &[SweepRecord]) -> CorruptionSummary {
    let mut pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.corruption, r.info_nats_per_sample)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut max_decrease: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            max_decrease = max_decrease.max(pts[i].1 - pts[j].1);
        }
    }
    let increase = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => b.1 - a.1,
        _ => f64::NAN,
    };
    CorruptionSummary {
        schema_version: crate::SCHEMA_VERSION,
        beta: cfg.corruption.beta,
        n: cfg.corruption.n,
        levels: pts.iter().map(|p| p.0).collect(),
        info_nats_per_sample: pts.iter().map(|p| p.1).collect(),
        max_decrease,
        increase,
        reference_nats_per_sample: 10f64.ln(),
    }
}

/// Writes `sweep_corruption.csv` and `corruption_summary.json`. Each level
/// trains until the per-sample objective plateaus or `max_epochs` is
/// reached.
pub fn run_corruption(cfg: &ExperimentConfig, out: &Path) -> CliResult<i32> {
    cfg.validate()?;
    crate::prepare_out_dir(out)?;
    let pool = load_pool(cfg)?;
    let c = &cfg.corruption;
    check_sizes(&pool, [c.n])?;
    let mut tc = cfg.train.to_train_config(&cfg.model, cfg.seed);
    tc.epochs = c.max_epochs;
    tc.learning_rate.decay_every = c.lr_decay_every;
    tc.early_stop = Some(Plateau {
        window: c.plateau_window,
        tol: c.plateau_tol,
        info_weight: c.beta,
    });
    let cells: Vec<Cell> = c
        .levels
        .iter()
        .map(|&p| Cell {
            label_mode: "corrupted".into(),
            beta: c.beta,
            n: c.n,
            corruption: p,
            seed: cfg.seed,
        })
        .collect();
    let (rows, errors) = run_sweep(&pool, cfg, &cells, &tc)?;
    write_csv(&out.join("sweep_corruption.csv"), SWEEP_HEADER, &rows)?;
    let summary = corruption_summary(cfg, &rows);
    crate::write_json(&out.join("corruption_summary.json"), &summary)?;
    for r in &rows {
        println!(
            "corruption={:<5} epochs={:<4} train_acc={:.4} info/N={:.4} nats",
            r.corruption, r.epochs_run, r.train_acc, r.info_nats_per_sample
        );
    }
    println!(
        "increase (highest - lowest level) = {:.4} nats/sample; ln 10 = {:.4}",
        summary.increase, summary.reference_nats_per_sample
    );
    report_errors(&rows);
    Ok(sweep_exit_code(&errors))
}
