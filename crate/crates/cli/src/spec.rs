//! Experiment configuration as read from JSON.

use delayed_glm_bandit::env::{DelayModel, EnvironmentConfig, ThetaSource};
use delayed_glm_bandit::glm::LinkKind;
use delayed_glm_bandit::policy::{PolicyConfig, PolicyKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Noise bound of the simulated environments; policies carry their own `r`.
pub const ENV_NOISE_BOUND: f64 = 1.0;
/// Norm bound on `θ*` in the simulated environments.
pub const ENV_NORM_BOUND: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayKind {
    Zero,
    Constant,
    Exponential,
    Uniform,
    Pareto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    pub kind: DelayKind,
    /// Expected delay; the delay itself for `constant`, ignored for `zero`.
    #[serde(default)]
    pub mean: f64,
}

impl DelaySpec {
    pub fn model(&self) -> DelayModel {
        match self.kind {
            DelayKind::Zero => DelayModel::Zero,
            DelayKind::Constant => DelayModel::Constant(self.mean),
            DelayKind::Exponential => DelayModel::Exponential { mean: self.mean },
            DelayKind::Uniform => DelayModel::Uniform { mean: self.mean },
            DelayKind::Pareto => DelayModel::Pareto { mean: self.mean },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub d: usize,
    pub k: usize,
    pub t: u64,
    pub link: LinkKind,
    pub delay: DelaySpec,
    pub theta_seed: u64,
}

impl CellSpec {
    pub fn environment(&self, run_seed: u64) -> EnvironmentConfig {
        EnvironmentConfig {
            theta: ThetaSource::Seed(self.theta_seed),
            seed: run_seed,
            noise_bound: ENV_NOISE_BOUND,
            norm_bound: ENV_NORM_BOUND,
            ..EnvironmentConfig::new(self.d, self.k, self.t, self.link, self.delay.model())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub alpha: f64,
    pub delta: f64,
    pub m1: f64,
    pub r: f64,
}

impl PolicySpec {
    pub fn config(&self, link: LinkKind) -> PolicyConfig {
        PolicyConfig::for_link(self.kind, link, self.alpha, self.delta, self.m1, self.r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub cells: Vec<CellSpec>,
    pub policies: Vec<PolicySpec>,
    pub n_runs: usize,
    pub base_seed: u64,
    pub record_every: u64,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Seed of replication `run`; shared by every cell and policy so that
    /// comparisons use common random numbers.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.n_runs).map(|r| self.run_seed(r)).collect()
    }

    /// Rounds at which aggregates are reported for a cell.
    pub fn recorded_rounds(&self, cell: &CellSpec) -> impl Iterator<Item = u64> {
        let every = self.record_every.max(1);
        (1..=cell.t / every).map(move |i| i * every)
    }

    /// Column label of each policy: its kind, with the position appended when
    /// two policies share a kind.
    pub fn policy_labels(&self) -> Vec<String> {
        self.policies
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let shared = self.policies.iter().filter(|q| q.kind == p.kind).count() > 1;
                if shared {
                    format!("{}#{i}", p.kind.as_str())
                } else {
                    p.kind.as_str().to_string()
                }
            })
            .collect()
    }

    pub fn validate(&self, allow_unbounded_noise: bool) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::InvalidSpec(msg));
        if self.n_runs < 1 {
            return bad("n_runs must be at least 1".into());
        }
        if self.record_every < 1 {
            return bad("record_every must be at least 1".into());
        }
        for (i, cell) in self.cells.iter().enumerate() {
            if cell.link == LinkKind::Exponential && !allow_unbounded_noise {
                return bad(format!(
                    "cell {i}: Poisson rewards have unbounded noise; pass --allow-unbounded-noise to run them"
                ));
            }
            cell.environment(0)
                .validate()
                .map_err(|e| CliError::InvalidSpec(format!("cell {i}: {e}")))?;
            for (j, p) in self.policies.iter().enumerate() {
                p.config(cell.link)
                    .validate()
                    .map_err(|e| CliError::InvalidSpec(format!("cell {i}, policy {j}: {e}")))?;
            }
        }
        Ok(())
    }
}

/// Named configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Desk,
    Paper,
}

fn policy_trio(delta: f64) -> Vec<PolicySpec> {
    [
        PolicyKind::DelayedOfuGlm,
        PolicyKind::DelayInflatedUcb,
        PolicyKind::Random,
    ]
    .into_iter()
    .map(|kind| PolicySpec {
        kind,
        alpha: 1.0,
        delta,
        m1: ENV_NORM_BOUND,
        r: ENV_NOISE_BOUND,
    })
    .collect()
}

impl Preset {
    pub fn spec(self) -> ExperimentSpec {
        let delta = 0.05 / 3.0;
        match self {
            Preset::Desk => {
                let mut cells = Vec::new();
                for link in [LinkKind::Identity, LinkKind::Logistic] {
                    for mean in [25.0, 100.0] {
                        cells.push(CellSpec {
                            d: 5,
                            k: 20,
                            t: 20_000,
                            link,
                            delay: DelaySpec {
                                kind: DelayKind::Exponential,
                                mean,
                            },
                            theta_seed: 1,
                        });
                    }
                }
                ExperimentSpec {
                    cells,
                    policies: policy_trio(delta),
                    n_runs: 10,
                    base_seed: 0,
                    record_every: 100,
                }
            }
            Preset::Paper => {
                let mut cells = Vec::new();
                for link in [LinkKind::Identity, LinkKind::Logistic] {
                    for d in [5, 10, 20] {
                        for kind in [
                            DelayKind::Exponential,
                            DelayKind::Uniform,
                            DelayKind::Pareto,
                        ] {
                            for mean in [100.0, 250.0, 500.0, 1000.0] {
                                cells.push(CellSpec {
                                    d,
                                    k: 100,
                                    t: 100_000,
                                    link,
                                    delay: DelaySpec { kind, mean },
                                    theta_seed: d as u64,
                                });
                            }
                        }
                    }
                }
                ExperimentSpec {
                    cells,
                    policies: policy_trio(delta),
                    n_runs: 30,
                    base_seed: 0,
                    record_every: 1000,
                }
            }
        }
    }
}
