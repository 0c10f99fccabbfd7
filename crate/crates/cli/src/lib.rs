//! Experiment runner behind the `gradflow` binary.
//!
//! `run` integrates every (flow, initialization) pair of a config and writes
//! traces, slopes, residuals and a manifest; `predict` writes the cumulant
//! table and the large-time prediction; `plot` renders SVG figures from those
//! artifacts.

pub mod config;
pub mod plot;
pub mod predict;
pub mod runner;
pub mod svg;

use std::path::Path;

pub use config::{ExperimentConfig, Plan};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<gradflow::Error> for CliError {
    fn from(e: gradflow::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// `FR__pi1__pi_a`-style stem; anything outside `[A-Za-z0-9_.-]` becomes `-`.
pub(crate) fn file_stem(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| {
            p.chars()
                .map(|c| if c.is_ascii_alphanumeric() || "_.-".contains(c) { c } else { '-' })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("__")
}

pub(crate) fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let f = std::fs::File::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(f))
}
