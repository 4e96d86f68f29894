//! CSV and metadata files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::runner::AggregateResult;
use crate::spec::ExperimentSpec;
use crate::CliError;

pub const CSV_HEADER: [&str; 7] = [
    "cell_id",
    "policy",
    "round",
    "mean_cum_regret",
    "se_cum_regret",
    "mean_pending",
    "coverage_rate",
];

pub fn write_csv(result: &AggregateResult, path: &Path) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in &result.rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub spec: ExperimentSpec,
    pub run_seeds: Vec<u64>,
    /// `E[τ]` of each cell's delay law.
    pub analytic_delay_means: Vec<f64>,
    pub policy_labels: Vec<String>,
    pub version: String,
}

impl Meta {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Self {
            spec: spec.clone(),
            run_seeds: spec.run_seeds(),
            analytic_delay_means: spec
                .cells
                .iter()
                .map(|c| c.delay.model().analytic_mean())
                .collect(),
            policy_labels: spec.policy_labels(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

pub fn write_meta(spec: &ExperimentSpec, path: &Path) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &Meta::new(spec)).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn read_meta(path: &Path) -> Result<Meta, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}
