//! Simulated environments: decision sets, true parameters, delay laws and the
//! queue that holds rewards until their observation round.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use thiserror::Error;

use crate::glm::{LinkFunction, LinkKind, ObservedSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("decision set is empty")]
    EmptyDecisionSet,
    #[error("invalid environment: {0}")]
    InvalidConfig(String),
}

/// Delay law, parameterized by the expected delay in rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayModel {
    Zero,
    Constant(f64),
    /// Rate `1/E[τ]`.
    Exponential {
        mean: f64,
    },
    /// Support `[0, 2E[τ]]`.
    Uniform {
        mean: f64,
    },
    /// Shape `a = (1+E[τ])/E[τ]`, scale `x_m = 1`; its actual mean is `1 + E[τ]`.
    Pareto {
        mean: f64,
    },
}

impl DelayModel {
    pub fn validate(&self) -> Result<(), EnvError> {
        let ok = match *self {
            DelayModel::Zero => true,
            DelayModel::Constant(c) => c >= 0.0 && c.is_finite(),
            DelayModel::Exponential { mean }
            | DelayModel::Uniform { mean }
            | DelayModel::Pareto { mean } => mean > 0.0 && mean.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(EnvError::InvalidConfig(format!("delay model {self:?}")))
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DelayModel::Zero => "zero",
            DelayModel::Constant(_) => "constant",
            DelayModel::Exponential { .. } => "exponential",
            DelayModel::Uniform { .. } => "uniform",
            DelayModel::Pareto { .. } => "pareto",
        }
    }

    /// The configured `E[τ]` parameter.
    pub fn nominal_mean(&self) -> f64 {
        match *self {
            DelayModel::Zero => 0.0,
            DelayModel::Constant(c) => c,
            DelayModel::Exponential { mean }
            | DelayModel::Uniform { mean }
            | DelayModel::Pareto { mean } => mean,
        }
    }

    pub fn pareto_shape(mean: f64) -> f64 {
        (1.0 + mean) / mean
    }

    /// Mean of the law actually sampled.
    pub fn analytic_mean(&self) -> f64 {
        match *self {
            DelayModel::Pareto { mean } => {
                let a = Self::pareto_shape(mean);
                a / (a - 1.0)
            }
            other => other.nominal_mean(),
        }
    }

    /// Standard deviation of the sampled law; infinite for the Pareto shapes used here.
    pub fn analytic_std(&self) -> f64 {
        match *self {
            DelayModel::Zero | DelayModel::Constant(_) => 0.0,
            DelayModel::Exponential { mean } => mean,
            DelayModel::Uniform { mean } => 2.0 * mean / 12f64.sqrt(),
            DelayModel::Pareto { mean } => {
                let a = Self::pareto_shape(mean);
                if a <= 2.0 {
                    f64::INFINITY
                } else {
                    (a / ((a - 1.0).powi(2) * (a - 2.0))).sqrt()
                }
            }
        }
    }

    /// Exact tail `P(τ > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match *self {
            DelayModel::Zero => 0.0,
            DelayModel::Constant(c) => {
                if c > x {
                    1.0
                } else {
                    0.0
                }
            }
            DelayModel::Exponential { mean } => (-x / mean).exp(),
            DelayModel::Uniform { mean } => (1.0 - x / (2.0 * mean)).clamp(0.0, 1.0),
            DelayModel::Pareto { mean } => {
                if x < 1.0 {
                    1.0
                } else {
                    x.powf(-Self::pareto_shape(mean))
                }
            }
        }
    }
}

pub fn sample_delay<G: Rng + ?Sized>(model: &DelayModel, rng: &mut G) -> f64 {
    match *model {
        DelayModel::Zero => 0.0,
        DelayModel::Constant(c) => c,
        DelayModel::Exponential { mean } => {
            Exp::new(1.0 / mean).expect("positive rate").sample(rng)
        }
        DelayModel::Uniform { mean } => rng.random::<f64>() * 2.0 * mean,
        DelayModel::Pareto { mean } => {
            // inverse CDF with U in (0, 1]
            let u = 1.0 - rng.random::<f64>();
            u.powf(-1.0 / DelayModel::pareto_shape(mean))
        }
    }
}

/// Uniform draw from the closed unit ball: Gaussian direction times `U^{1/d}`.
pub fn sample_unit_ball<G: Rng + ?Sized>(d: usize, rng: &mut G) -> DVector<f64> {
    loop {
        let dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = dir.norm();
        if norm > 0.0 {
            let radius = rng.random::<f64>().powf(1.0 / d as f64);
            return dir * (radius / norm);
        }
    }
}

pub fn generate_decision_set<G: Rng + ?Sized>(
    d: usize,
    k: usize,
    rng: &mut G,
) -> Vec<DVector<f64>> {
    (0..k).map(|_| sample_unit_ball(d, rng)).collect()
}

pub fn sample_theta_star<G: Rng + ?Sized>(d: usize, m1: f64, rng: &mut G) -> DVector<f64> {
    sample_unit_ball(d, rng) * m1
}

/// Best arm by expected reward, lowest index on ties.
pub fn best_expected_reward(
    decision_set: &[DVector<f64>],
    theta_star: &DVector<f64>,
    link: &LinkFunction,
) -> Result<(usize, f64), EnvError> {
    argmax_lowest(decision_set.iter().map(|x| link.eval(x.dot(theta_star))))
        .ok_or(EnvError::EmptyDecisionSet)
}

/// Index and value of the maximum; earliest index wins ties.
pub(crate) fn argmax_lowest(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        match best {
            Some((_, b)) if v.partial_cmp(&b) != Some(std::cmp::Ordering::Greater) => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

/// A reward waiting for its observation round `⌈s + τ_s⌉`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledReward {
    pub origin_round: u64,
    pub action: DVector<f64>,
    pub reward: f64,
    pub delay: f64,
    pub arrival_round: u64,
}

#[derive(Debug, Clone, Default)]
pub struct DeliveryQueue {
    scheduled: BTreeMap<u64, Vec<ScheduledReward>>,
    len: usize,
}

impl DeliveryQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Stores the reward of round `s`; it is delivered at the end of round `⌈s + τ⌉`.
    pub fn schedule(&mut self, s: u64, action: DVector<f64>, reward: f64, delay: f64) -> u64 {
        let arrival_round = arrival_round(s, delay);
        self.scheduled
            .entry(arrival_round)
            .or_default()
            .push(ScheduledReward {
                origin_round: s,
                action,
                reward,
                delay,
                arrival_round,
            });
        self.len += 1;
        arrival_round
    }

    /// Removes and returns the records with `t − 1 < s + τ_s ≤ t`, oldest first.
    pub fn pop_due(&mut self, t: u64) -> Vec<ObservedSample> {
        let mut due = self.scheduled.remove(&t).unwrap_or_default();
        self.len -= due.len();
        due.sort_by_key(|r| r.origin_round);
        due.into_iter()
            .map(|r| ObservedSample {
                action: r.action,
                reward: r.reward,
                origin_round: r.origin_round,
            })
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScheduledReward> {
        self.scheduled.values().flatten()
    }
}

/// `⌈s + τ⌉`, saturating for delays beyond any horizon.
pub fn arrival_round(s: u64, delay: f64) -> u64 {
    let t = (s as f64 + delay).ceil();
    if t >= u64::MAX as f64 {
        u64::MAX
    } else {
        t as u64
    }
}

/// Where the true parameter comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaSource {
    Seed(u64),
    Explicit(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentConfig {
    pub dim: usize,
    pub arms: usize,
    pub horizon: u64,
    pub link: LinkKind,
    pub theta: ThetaSource,
    pub delay: DelayModel,
    /// Per-run seed for decision sets, noise, delays and policy randomness.
    pub seed: u64,
    pub noise_bound: f64,
    pub norm_bound: f64,
}

impl EnvironmentConfig {
    pub fn new(dim: usize, arms: usize, horizon: u64, link: LinkKind, delay: DelayModel) -> Self {
        Self {
            dim,
            arms,
            horizon,
            link,
            theta: ThetaSource::Seed(0),
            delay,
            seed: 0,
            noise_bound: 1.0,
            norm_bound: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.dim == 0 || self.arms == 0 || self.horizon == 0 {
            return Err(EnvError::InvalidConfig(format!(
                "d = {}, K = {}, T = {} must all be at least 1",
                self.dim, self.arms, self.horizon
            )));
        }
        if let ThetaSource::Explicit(theta) = &self.theta {
            if theta.len() != self.dim {
                return Err(EnvError::InvalidConfig(format!(
                    "theta has {} entries, d = {}",
                    theta.len(),
                    self.dim
                )));
            }
        }
        self.delay.validate()
    }

    pub fn theta_star(&self) -> DVector<f64> {
        match &self.theta {
            ThetaSource::Explicit(theta) => theta.clone(),
            ThetaSource::Seed(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                sample_theta_star(self.dim, self.norm_bound, &mut rng)
            }
        }
    }
}

/// Independent generator streams for one run, split from a single seed so
/// that changing one source of randomness leaves the others untouched.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub decisions: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub delays: ChaCha8Rng,
    pub policy: ChaCha8Rng,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            decisions: stream(1),
            noise: stream(2),
            delays: stream(3),
            policy: stream(4),
        }
    }
}
