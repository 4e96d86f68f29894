//! Matrix bounds evaluated along the actual action sequences of the learner.

use delayed_glm_bandit::confidence::optimistic_index;
use delayed_glm_bandit::linalg::psd_sqrt;
use delayed_glm_bandit::policy::{PolicyConfig, PolicyKind};
use delayed_glm_bandit::sim::run_episode_with;
use delayed_glm_bandit::verify::{
    elliptical_potential_violation, missing_matrix_violation, product_matrix_violation,
    product_potential_violation, trace_determinant_violation, History, DETERMINISTIC_TOL,
};
use delayed_glm_bandit::{DelayModel, EnvironmentConfig, LinkKind, ThetaSource};
use nalgebra::DVector;

fn traced(
    link: LinkKind,
    delay: DelayModel,
    seed: u64,
) -> (History, Vec<delayed_glm_bandit::DesignState>) {
    let env = EnvironmentConfig {
        theta: ThetaSource::Seed(seed),
        seed,
        ..EnvironmentConfig::new(3, 10, 300, link, delay)
    };
    let cfg = PolicyConfig::for_link(PolicyKind::DelayedOfuGlm, link, 1.0, 0.05, 1.0, 1.0);
    let mut history = History {
        lambda: cfg.lambda(),
        actions: Vec::new(),
        delays: Vec::new(),
    };
    let mut states = Vec::new();
    run_episode_with(&env, &cfg, |view| {
        history.actions.push(view.decision_set[view.chosen].clone());
        history.delays.push(view.record.delay);
        states.push(view.policy.design().clone());
    })
    .unwrap();
    (history, states)
}

#[test]
fn bounds_hold_along_learner_traces() {
    let delays = [
        DelayModel::Exponential { mean: 20.0 },
        DelayModel::Uniform { mean: 10.0 },
        DelayModel::Pareto { mean: 30.0 },
        DelayModel::Constant(7.0),
    ];
    for (i, delay) in delays.iter().enumerate() {
        for link in [LinkKind::Identity, LinkKind::Logistic] {
            let (history, states) = traced(link, *delay, i as u64 + 1);
            // the learner's own design agrees with an independent replay
            let replayed = history.states();
            for (t, s) in states.iter().enumerate() {
                assert_eq!(s.pending(), replayed[t + 1].pending());
                assert!((s.w_bar() - replayed[t + 1].w_bar()).amax() < 1e-12);
                assert!(missing_matrix_violation(s) <= DETERMINISTIC_TOL);
                assert!(product_matrix_violation(s) <= DETERMINISTIC_TOL);
            }
            assert!(product_potential_violation(&history) <= DETERMINISTIC_TOL);
            assert!(
                elliptical_potential_violation(&history.actions, history.lambda)
                    <= DETERMINISTIC_TOL
            );
            assert!(
                trace_determinant_violation(&history.actions, history.lambda) <= DETERMINISTIC_TOL
            );
        }
    }
}

#[test]
fn chosen_arm_maximizes_over_the_ellipsoid() {
    // In d = 2 the ellipsoid boundary is θ̂ + √β·W̄^{-1/2}(cos a, sin a).
    let env = EnvironmentConfig {
        theta: ThetaSource::Seed(9),
        seed: 9,
        ..EnvironmentConfig::new(
            2,
            6,
            150,
            LinkKind::Logistic,
            DelayModel::Exponential { mean: 5.0 },
        )
    };
    let cfg = PolicyConfig::for_link(
        PolicyKind::DelayedOfuGlm,
        LinkKind::Logistic,
        1.0,
        0.05,
        1.0,
        1.0,
    );
    let mut checked = 0;
    let mut previous: Option<delayed_glm_bandit::ConfidenceSet> = None;
    run_episode_with(&env, &cfg, |view| {
        let cs = previous.replace(view.policy.confidence_set().clone());
        let Some(cs) = cs else { return };
        let root_inv = psd_sqrt(cs.shape_inverse());
        let link = view.policy.link();
        let scores: Vec<f64> = view
            .decision_set
            .iter()
            .map(|x| {
                (0..4_000)
                    .map(|k| {
                        let a = k as f64 * std::f64::consts::TAU / 4_000.0;
                        let u = DVector::from_vec(vec![a.cos(), a.sin()]);
                        let theta = cs.theta_hat() + &root_inv * u * cs.sqrt_beta();
                        link.eval(x.dot(&theta))
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        for (x, s) in view.decision_set.iter().zip(&scores) {
            let index = optimistic_index(&cs, x, link);
            assert!(index >= *s - 1e-12 && index - s < 1e-5);
        }
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if sorted.len() > 1 && sorted[0] - sorted[1] > 1e-5 {
            let best = scores.iter().position(|s| *s == sorted[0]).unwrap();
            assert_eq!(view.chosen, best, "round {}", view.round);
            checked += 1;
        }
    })
    .unwrap();
    assert!(checked > 75);
}
