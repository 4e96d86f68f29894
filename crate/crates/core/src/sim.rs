//! The round loop: decision set, choice, reward, delay, delivery, update.

use nalgebra::DVector;
use thiserror::Error;

use crate::confidence::membership;
use crate::env::{
    best_expected_reward, generate_decision_set, sample_delay, DeliveryQueue, EnvError,
    EnvironmentConfig, RunStreams,
};
use crate::glm::{sample_reward, GlmError, GlmModel, LinkFunction, ObservedSample};
use crate::policy::{Policy, PolicyConfig, PolicyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Model(#[from] GlmError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("round {round}: {source}")]
    Round { round: u64, source: PolicyError },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub instant_regret: f64,
    pub cum_regret: f64,
    /// `G_t` after this round's deliveries.
    pub pending: usize,
    /// `√β_t` after this round's update.
    pub sqrt_beta: f64,
    /// Whether `θ*` was inside `C_{t−1}`, the set used for this decision.
    pub covered: bool,
    pub chosen_index: usize,
    pub optimal_index: usize,
    pub delay: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rounds: Vec<RoundRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cum_regret)
    }

    /// Cumulative regret after round `t` (1-based).
    pub fn cum_regret_at(&self, t: u64) -> f64 {
        match t {
            0 => 0.0,
            t => self.rounds[(t - 1) as usize].cum_regret,
        }
    }

    /// Whether `θ*` stayed inside every confidence set up to and including round `t`.
    pub fn covered_through(&self, t: u64) -> bool {
        self.rounds.iter().take(t as usize).all(|r| r.covered)
    }
}

/// `μ(⟨X*, θ*⟩) − μ(⟨X_t, θ*⟩)`.
pub fn instant_regret(
    decision_set: &[DVector<f64>],
    chosen: usize,
    theta_star: &DVector<f64>,
    link: &LinkFunction,
) -> Result<f64, EnvError> {
    let (_, best) = best_expected_reward(decision_set, theta_star, link)?;
    let x = decision_set.get(chosen).ok_or(EnvError::EmptyDecisionSet)?;
    Ok(best - link.eval(x.dot(theta_star)))
}

/// What an observer sees at the end of each round.
pub struct RoundView<'a> {
    pub round: u64,
    pub decision_set: &'a [DVector<f64>],
    pub chosen: usize,
    pub reward: f64,
    pub arrivals: &'a [ObservedSample],
    pub policy: &'a Policy,
    pub record: &'a RoundRecord,
}

pub fn run_episode(env: &EnvironmentConfig, policy: &PolicyConfig) -> Result<Trace, SimError> {
    run_episode_with(env, policy, |_| {})
}

/// Runs `env.horizon` rounds, calling `observer` after each one.
pub fn run_episode_with<F>(
    env: &EnvironmentConfig,
    policy: &PolicyConfig,
    mut observer: F,
) -> Result<Trace, SimError>
where
    F: FnMut(&RoundView<'_>),
{
    env.validate()?;
    let model = GlmModel::new(env.theta_star(), env.link, env.noise_bound, env.norm_bound)?;
    let mut learner = Policy::new(policy.clone(), env.link, env.dim)?;
    let mut streams = RunStreams::new(env.seed);
    let mut queue = DeliveryQueue::new();
    let mut trace = Trace {
        rounds: Vec::with_capacity(env.horizon as usize),
    };
    let mut cum_regret = 0.0;

    for t in 1..=env.horizon {
        let decision_set = generate_decision_set(env.dim, env.arms, &mut streams.decisions);
        let (optimal_index, best) =
            best_expected_reward(&decision_set, &model.theta_star, &model.link)?;
        let covered = membership(learner.confidence_set(), &model.theta_star);

        let chosen = learner
            .select_action(&decision_set, &mut streams.policy)
            .map_err(|source| SimError::Round { round: t, source })?;
        let action = &decision_set[chosen];
        let reward = sample_reward(&model, action, &mut streams.noise);
        let delay = sample_delay(&env.delay, &mut streams.delays);
        queue.schedule(t, action.clone(), reward, delay);

        let arrivals = queue.pop_due(t);
        learner
            .observe(&arrivals)
            .map_err(|source| SimError::Round { round: t, source })?;

        let regret = (best - model.expected_reward(action)).max(0.0);
        cum_regret += regret;
        let record = RoundRecord {
            round: t,
            instant_regret: regret,
            cum_regret,
            pending: queue.len(),
            sqrt_beta: learner.sqrt_beta(),
            covered,
            chosen_index: chosen,
            optimal_index,
            delay,
        };
        debug_assert_eq!(record.pending, learner.design().pending());
        observer(&RoundView {
            round: t,
            decision_set: &decision_set,
            chosen,
            reward,
            arrivals: &arrivals,
            policy: &learner,
            record: &record,
        });
        trace.rounds.push(record);
    }
    Ok(trace)
}
