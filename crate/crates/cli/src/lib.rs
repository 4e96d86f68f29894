//! Experiment runner for delayed generalized linear bandits.

use std::path::PathBuf;

use thiserror::Error;

pub mod output;
pub mod runner;
pub mod spec;

pub use output::{read_meta, write_csv, write_meta, Meta, CSV_HEADER};
pub use runner::{run_experiment, AggregateResult, AggregateRow};
pub use spec::{CellSpec, DelayKind, DelaySpec, ExperimentSpec, PolicySpec, Preset};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("every run of cell {cell}, policy {policy} failed")]
    AllRunsFailed { cell: usize, policy: String },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Reads, validates and runs a config file, then writes `results.csv` and
/// `meta.json` into `out_dir`.
pub fn run_config_file(
    config: &std::path::Path,
    out_dir: &std::path::Path,
    workers: usize,
    seed_override: Option<u64>,
    allow_unbounded_noise: bool,
) -> Result<AggregateResult, CliError> {
    let text = std::fs::read_to_string(config).map_err(|source| CliError::Io {
        path: config.to_path_buf(),
        source,
    })?;
    let mut spec = ExperimentSpec::from_json(&text).map_err(|source| CliError::Json {
        path: config.to_path_buf(),
        source,
    })?;
    if let Some(seed) = seed_override {
        spec.base_seed = seed;
    }
    spec.validate(allow_unbounded_noise)?;
    if spec
        .cells
        .iter()
        .any(|c| c.link == delayed_glm_bandit::LinkKind::Exponential)
    {
        log::warn!("Poisson rewards break the bounded-noise assumption; confidence widths are not guaranteed");
    }
    std::fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let result = run_experiment(&spec, workers)?;
    write_csv(&result, &out_dir.join("results.csv"))?;
    write_meta(&spec, &out_dir.join("meta.json"))?;
    Ok(result)
}
