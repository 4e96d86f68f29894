//! With no delay the learner must coincide, bit for bit, with a plain
//! optimistic GLM loop that sees every reward at the end of its round.

use delayed_glm_bandit::env::{
    best_expected_reward, generate_decision_set, sample_delay, RunStreams,
};
use delayed_glm_bandit::glm::{
    fit_penalized_mle, sample_reward, GlmModel, ObservedSample, Samples,
};
use delayed_glm_bandit::linalg::{quad_form, spd_inverse, spd_log_det};
use delayed_glm_bandit::policy::{PolicyConfig, PolicyKind};
use delayed_glm_bandit::sim::{run_episode_with, RoundRecord};
use delayed_glm_bandit::{DelayModel, EnvironmentConfig, LinkKind, ThetaSource};
use nalgebra::{DMatrix, DVector};

fn reference_loop(
    env: &EnvironmentConfig,
    cfg: &PolicyConfig,
) -> Vec<(usize, f64, f64, DVector<f64>)> {
    let model = GlmModel::new(env.theta_star(), env.link, env.noise_bound, env.norm_bound).unwrap();
    let link = model.link;
    let d = env.dim;
    let lambda = cfg.alpha * cfg.dispersion / cfg.kappa;
    let width = |w: &DMatrix<f64>| {
        let log_ratio =
            0.5 * spd_log_det(w).unwrap() - 0.5 * d as f64 * lambda.ln() - cfg.delta.ln();
        lambda.sqrt() * cfg.m1 + (cfg.noise_bound / cfg.kappa) * (2.0 * log_ratio.max(0.0)).sqrt()
    };
    let mut streams = RunStreams::new(env.seed);
    let mut w = DMatrix::identity(d, d) * lambda;
    let mut samples = Samples::new(d);
    let mut theta = DVector::zeros(d);
    let mut sqrt_beta = width(&w);
    let mut cum = 0.0;
    let mut out = Vec::new();
    for t in 1..=env.horizon {
        let set = generate_decision_set(d, env.arms, &mut streams.decisions);
        let (_, best) = best_expected_reward(&set, &model.theta_star, &link).unwrap();
        let w_inv = spd_inverse(&w).unwrap();
        let mut chosen = 0;
        let mut top = f64::NEG_INFINITY;
        for (i, x) in set.iter().enumerate() {
            let bonus = sqrt_beta * quad_form(&w_inv, x).max(0.0).sqrt();
            let index = link.eval(x.dot(&theta) + bonus);
            if index > top {
                top = index;
                chosen = i;
            }
        }
        let x = &set[chosen];
        let reward = sample_reward(&model, x, &mut streams.noise);
        assert_eq!(sample_delay(&env.delay, &mut streams.delays), 0.0);
        w.ger(1.0, x, x, 1.0);
        samples
            .push(&ObservedSample {
                action: x.clone(),
                reward,
                origin_round: t,
            })
            .unwrap();
        theta = fit_penalized_mle(&samples, cfg.alpha, &link, &theta, cfg.solver).unwrap();
        sqrt_beta = width(&w);
        cum += (best - model.expected_reward(x)).max(0.0);
        out.push((chosen, cum, sqrt_beta, theta.clone()));
    }
    out
}

#[test]
fn zero_delay_matches_plain_optimistic_loop() {
    for (link, seed) in [
        (LinkKind::Identity, 1),
        (LinkKind::Logistic, 2),
        (LinkKind::Exponential, 3),
    ] {
        let env = EnvironmentConfig {
            theta: ThetaSource::Seed(seed + 10),
            seed,
            ..EnvironmentConfig::new(4, 10, 400, link, DelayModel::Zero)
        };
        let cfg = PolicyConfig::for_link(PolicyKind::DelayedOfuGlm, link, 1.0, 0.05, 1.0, 1.0);
        let mut records: Vec<RoundRecord> = Vec::new();
        let mut estimates: Vec<DVector<f64>> = Vec::new();
        run_episode_with(&env, &cfg, |view| {
            let design = view.policy.design();
            assert_eq!(design.v_bar(), design.w_bar());
            assert_eq!(design.pending(), 0);
            assert_eq!(view.arrivals.len(), 1);
            records.push(*view.record);
            estimates.push(view.policy.theta_hat().clone());
        })
        .unwrap();
        let reference = reference_loop(&env, &cfg);
        assert_eq!(records.len(), reference.len());
        for ((r, est), (chosen, cum, sqrt_beta, theta)) in
            records.iter().zip(&estimates).zip(&reference)
        {
            assert_eq!(r.chosen_index, *chosen, "{link:?} round {}", r.round);
            assert_eq!(r.cum_regret.to_bits(), cum.to_bits());
            assert_eq!(r.sqrt_beta.to_bits(), sqrt_beta.to_bits());
            assert!(est
                .iter()
                .zip(theta.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
