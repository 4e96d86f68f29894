//! Replication matrix, parallel dispatch and aggregation.

use delayed_glm_bandit::sim::{run_episode_with, SimError};
use rayon::prelude::*;
use serde::Serialize;

use crate::spec::ExperimentSpec;
use crate::CliError;

/// Snapshot of one run at a recorded round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPoint {
    pub round: u64,
    pub cum_regret: f64,
    pub pending: usize,
    /// `θ*` stayed inside every confidence set so far.
    pub covered: bool,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub cell_id: usize,
    pub policy: String,
    pub round: u64,
    pub mean_cum_regret: f64,
    pub se_cum_regret: f64,
    pub mean_pending: f64,
    pub coverage_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregateResult {
    pub rows: Vec<AggregateRow>,
    /// Runs that failed and were left out of the averages.
    pub failed_runs: usize,
}

impl AggregateResult {
    /// Last recorded row of a cell and policy.
    pub fn final_row(&self, cell_id: usize, policy: &str) -> Option<&AggregateRow> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.cell_id == cell_id && r.policy == policy)
    }

    pub fn row_at(&self, cell_id: usize, policy: &str, round: u64) -> Option<&AggregateRow> {
        self.rows
            .iter()
            .find(|r| r.cell_id == cell_id && r.policy == policy && r.round == round)
    }
}

/// `(mean, sample SD / √n)`.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs one replication and keeps the recorded rounds.
pub fn run_single(
    spec: &ExperimentSpec,
    cell: usize,
    policy: usize,
    run: usize,
) -> Result<Vec<RunPoint>, SimError> {
    let c = &spec.cells[cell];
    let env = c.environment(spec.run_seed(run));
    let cfg = spec.policies[policy].config(c.link);
    let every = spec.record_every.max(1);
    let mut points = Vec::with_capacity((c.t / every) as usize);
    let mut covered = true;
    run_episode_with(&env, &cfg, |view| {
        covered &= view.record.covered;
        if view.round % every == 0 {
            points.push(RunPoint {
                round: view.round,
                cum_regret: view.record.cum_regret,
                pending: view.record.pending,
                covered,
            });
        }
    })?;
    Ok(points)
}

/// Runs every (cell, policy, run) triple on `workers` threads.
///
/// Results are merged in job order, so the output does not depend on the
/// number of workers.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<AggregateResult, CliError> {
    let jobs: Vec<(usize, usize, usize)> = (0..spec.cells.len())
        .flat_map(|c| {
            (0..spec.policies.len()).flat_map(move |p| (0..spec.n_runs).map(move |r| (c, p, r)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::ThreadPool(e.to_string()))?;
    let outcomes: Vec<Result<Vec<RunPoint>, SimError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, p, r)| {
                let out = run_single(spec, c, p, r);
                log::debug!("cell {c} policy {p} run {r} done");
                out
            })
            .collect()
    });

    let labels = spec.policy_labels();
    let mut result = AggregateResult::default();
    let mut outcomes = outcomes.into_iter();
    for (c, cell) in spec.cells.iter().enumerate() {
        for label in &labels {
            let mut runs = Vec::with_capacity(spec.n_runs);
            for r in 0..spec.n_runs {
                match outcomes.next().expect("one outcome per job") {
                    Ok(points) => runs.push(points),
                    Err(e) => {
                        log::warn!("cell {c}, policy {label}, run {r} failed: {e}");
                        result.failed_runs += 1;
                    }
                }
            }
            if runs.is_empty() {
                return Err(CliError::AllRunsFailed {
                    cell: c,
                    policy: label.clone(),
                });
            }
            for (i, round) in spec.recorded_rounds(cell).enumerate() {
                let regrets: Vec<f64> = runs.iter().map(|pts| pts[i].cum_regret).collect();
                let (mean, se) = mean_and_se(&regrets);
                let n = runs.len() as f64;
                result.rows.push(AggregateRow {
                    cell_id: c,
                    policy: label.clone(),
                    round,
                    mean_cum_regret: mean,
                    se_cum_regret: se,
                    mean_pending: runs.iter().map(|pts| pts[i].pending as f64).sum::<f64>() / n,
                    coverage_rate: runs.iter().filter(|pts| pts[i].covered).count() as f64 / n,
                });
            }
        }
    }
    if result.failed_runs > 0 {
        log::warn!("{} run(s) failed and were excluded", result.failed_runs);
    }
    Ok(result)
}
