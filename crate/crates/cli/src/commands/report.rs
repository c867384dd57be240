use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::records::{read_csv, CsvFile, HistoryRow, NuisanceRecord, SweepRecord};
use crate::CliResult;

/// Train accuracy below which a random-label cell counts as not memorizing.
pub const TRANSITION_ACCURACY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub file: String,
    pub rows: Vec<HistoryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub n: usize,
    pub seed: u64,
    pub betas: Vec<f64>,
    pub train_acc: Vec<f64>,
    /// First grid beta whose random-label train accuracy is below
    /// [`TRANSITION_ACCURACY`]; `None` if every cell stays above.
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionTrend {
    pub beta: f64,
    pub n: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
    pub info_nats_per_sample: Vec<f64>,
    /// Highest level minus lowest level.
    pub increase: f64,
    /// Largest drop from a level to any higher level.
    pub max_decrease: f64,
    pub reference_nats_per_sample: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceTrend {
    pub betas: Vec<f64>,
    pub mi_nats: Vec<f64>,
    pub se_nats: Vec<f64>,
    /// Largest `I(beta_{k+1}) - I(beta_k)` in units of the pair's combined SE.
    pub max_rise_in_se: f64,
    pub non_increasing_within_1se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub inputs: Vec<String>,
    pub sweep_rows: Vec<SweepRecord>,
    pub nuisance_rows: Vec<NuisanceRecord>,
    pub histories: Vec<History>,
    pub transitions: Vec<Transition>,
    pub corruption: Vec<CorruptionTrend>,
    pub nuisance_trend: Option<NuisanceTrend>,
}

fn canonical<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("row serializes")
}

pub fn transitions(rows: &[SweepRecord]) -> Vec<Transition> {
    let mut groups: BTreeMap<(usize, u64), Vec<&SweepRecord>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.label_mode == "random" && r.error.is_empty()) {
        groups.entry((r.n, r.seed)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((n, seed), mut g)| {
            g.sort_by(|a, b| a.beta.total_cmp(&b.beta));
            Transition {
                n,
                seed,
                betas: g.iter().map(|r| r.beta).collect(),
                train_acc: g.iter().map(|r| r.train_acc).collect(),
                beta: g.iter().find(|r| r.train_acc < TRANSITION_ACCURACY).map(|r| r.beta),
            }
        })
        .collect()
}

pub fn corruption_trends(rows: &[SweepRecord]) -> Vec<CorruptionTrend> {
    let mut groups: BTreeMap<(u64, usize, u64), Vec<&SweepRecord>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.label_mode == "corrupted" && r.error.is_empty()) {
        groups.entry((r.beta.to_bits(), r.n, r.seed)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((beta, n, seed), mut g)| {
            g.sort_by(|a, b| a.corruption.total_cmp(&b.corruption));
            let info: Vec<f64> = g.iter().map(|r| r.info_nats_per_sample).collect();
            let mut max_decrease: f64 = 0.0;
            for i in 0..info.len() {
                for j in i + 1..info.len() {
                    max_decrease = max_decrease.max(info[i] - info[j]);
                }
            }
            CorruptionTrend {
                beta: f64::from_bits(beta),
                n,
                seed,
                levels: g.iter().map(|r| r.corruption).collect(),
                increase: info.last().unwrap_or(&f64::NAN) - info.first().unwrap_or(&f64::NAN),
                info_nats_per_sample: info,
                max_decrease,
                reference_nats_per_sample: 10f64.ln(),
            }
        })
        .collect()
}

pub fn nuisance_trend(rows: &[NuisanceRecord]) -> Option<NuisanceTrend> {
    let mut pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.kind == "beta" && r.error.is_empty())
        .filter_map(|r| r.beta.map(|b| (b, r.mi_nats, r.se_nats)))
        .collect();
    if pts.is_empty() {
        return None;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max_rise = pts
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[0].2.powi(2) + w[1].2.powi(2)).sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    Some(NuisanceTrend {
        betas: pts.iter().map(|p| p.0).collect(),
        mi_nats: pts.iter().map(|p| p.1).collect(),
        se_nats: pts.iter().map(|p| p.2).collect(),
        max_rise_in_se: max_rise,
        non_increasing_within_1se: pts.len() < 2 || max_rise <= 1.0,
    })
}

/// Merges emitted CSVs. The result does not depend on the order of
/// `inputs`: rows are sorted by cell key (ties by full content) and
/// histories by file name.
pub fn summarize(inputs: &[PathBuf]) -> CliResult<Summary> {
    let mut sweep_rows = Vec::new();
    let mut nuisance_rows = Vec::new();
    let mut histories = Vec::new();
    for p in inputs {
        match read_csv(p)? {
            CsvFile::Sweep(r) => sweep_rows.extend(r),
            CsvFile::Nuisance(r) => nuisance_rows.extend(r),
            CsvFile::History(rows) => histories.push(History {
                file: p.display().to_string(),
                rows,
            }),
        }
    }
    sweep_rows.sort_by(|a, b| a.key_cmp(b).then_with(|| canonical(a).cmp(&canonical(b))));
    nuisance_rows.sort_by(|a, b| a.key_cmp(b).then_with(|| canonical(a).cmp(&canonical(b))));
    histories.sort_by(|a, b| a.file.cmp(&b.file).then_with(|| canonical(&a.rows).cmp(&canonical(&b.rows))));
    let mut names: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
    names.sort();
    Ok(Summary {
        schema_version: crate::SCHEMA_VERSION,
        inputs: names,
        transitions: transitions(&sweep_rows),
        corruption: corruption_trends(&sweep_rows),
        nuisance_trend: nuisance_trend(&nuisance_rows),
        sweep_rows,
        nuisance_rows,
        histories,
    })
}

/// Writes `summary.json` into `out` and prints it.
pub fn run(inputs: &[PathBuf], out: &Path) -> CliResult<i32> {
    let summary = summarize(inputs)?;
    crate::prepare_out_dir(out)?;
    crate::write_json(&out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(0)
}
