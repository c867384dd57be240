//! Experiment harness around `ibw-core`: one-cell training, parallel
//! sweeps over beta/N and label corruption, the bound verification suite,
//! nuisance MI estimation and CSV merging.
//!
//! Each command takes an [`ExperimentConfig`] and an output directory and
//! returns the process exit code. Failures carry their own code:
//! 2 for bad configuration or malformed inputs, 3 for non-finite training,
//! 1 for everything else.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod records;

pub use config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NON_FINITE: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ibw_core::Error> for CliError {
    fn from(e: ibw_core::Error) -> Self {
        let code = match e {
            ibw_core::Error::Config(_) => EXIT_CONFIG,
            ibw_core::Error::NonFinite(_) => EXIT_NON_FINITE,
            _ => EXIT_FAILURE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Creates `dir` if needed; an unusable output directory is a config error.
pub fn prepare_out_dir(dir: &std::path::Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::config(format!("output directory {}: {e}", dir.display())))?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"")
        .map_err(|e| CliError::config(format!("output directory {} is not writable: {e}", dir.display())))?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

pub fn write_json(path: &std::path::Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::failure(format!("writing {}: {e}", path.display())))
}
