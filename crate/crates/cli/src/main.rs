use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ibw_cli::commands::{nuisance, report, sweep, train, verify};
use ibw_cli::{CliError, ExperimentConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "ibw", version, about = "Information in the weights: training, sweeps and bound checks")]
struct Cli {
    /// TOML config file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent sweep cells (overrides `jobs`).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print the effective config as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one cell; writes history.csv, record.csv and model.ckpt.
    Train,
    /// Sweep the beta x N grid; writes sweep_beta_n.csv.
    SweepBetaN,
    /// Sweep label corruption at fixed beta; writes sweep_corruption.csv.
    SweepCorruption,
    /// Run the bound verification suite; writes bounds.json.
    VerifyBounds,
    /// Estimate I(z;n) on cluttered digits; writes nuisance_mi.csv.
    NuisanceMi,
    /// Merge emitted CSVs into summary.json.
    Report {
        inputs: Vec<PathBuf>,
    },
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let cfg = effective_config(&cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(0);
    }
    let out = cfg.out.clone();
    match cli.command {
        None => Err(CliError::config("no command given (see --help)")),
        Some(Command::Train) => train::run(&cfg, &out),
        Some(Command::SweepBetaN) => sweep::run_beta_n(&cfg, &out),
        Some(Command::SweepCorruption) => sweep::run_corruption(&cfg, &out),
        Some(Command::VerifyBounds) => verify::run(&cfg, &out),
        Some(Command::NuisanceMi) => nuisance::run(&cfg, &out),
        Some(Command::Report { inputs }) => report::run(&inputs, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
