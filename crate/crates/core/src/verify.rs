//! Numerical checks of the matrix inequalities and probabilistic bounds the
//! regret analysis relies on.
//!
//! Deterministic checks replay short random-policy simulations, so every
//! instance has unit-ball actions and consistent pending bookkeeping. Each
//! check reports the worst signed violation; a check passes when that value
//! is at most its tolerance. Statistical checks report z-scores against a
//! tolerance of 3 standard errors.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::design::{inverse_identity_residual, weighted_norm, DesignState};
use crate::env::{
    arrival_round, generate_decision_set, sample_delay, sample_unit_ball, DelayModel, DeliveryQueue,
};
use crate::glm::{sample_reward, GlmModel, LinkKind};
use crate::linalg::{max_eigenvalue, min_eigenvalue, psd_sqrt, quad_form, sym_eigenvalues};

/// Tolerance for identities and inequalities that hold exactly.
pub const DETERMINISTIC_TOL: f64 = 1e-8;
/// z-score tolerance for Monte Carlo checks.
pub const STATISTICAL_Z: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub id: String,
    pub instances: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl LemmaReport {
    pub fn new(
        id: impl Into<String>,
        instances: usize,
        max_violation: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            id: id.into(),
            instances,
            max_violation,
            tolerance,
            pass: max_violation <= tolerance,
        }
    }
}

impl fmt::Display for LemmaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<34} instances={:<7} max_violation={:+.3e} tol={:.1e} {}",
            self.id,
            self.instances,
            self.max_violation,
            self.tolerance,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Actions and delays of one simulated run.
#[derive(Debug, Clone)]
pub struct History {
    pub lambda: f64,
    pub actions: Vec<DVector<f64>>,
    pub delays: Vec<f64>,
}

impl History {
    pub fn dim(&self) -> usize {
        self.actions.first().map_or(1, |x| x.len())
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// Replays the run. `visit(t, before, x_t, τ_t)` sees the state at the
    /// end of round `t − 1`; the final state is returned.
    pub fn replay<F>(&self, mut visit: F) -> DesignState
    where
        F: FnMut(u64, &DesignState, &DVector<f64>, f64),
    {
        let mut state = DesignState::new(self.dim(), self.lambda).expect("positive lambda");
        let mut queue = DeliveryQueue::new();
        for (i, (x, &tau)) in self.actions.iter().zip(&self.delays).enumerate() {
            let t = i as u64 + 1;
            visit(t, &state, x, tau);
            state.record_action(x).expect("unit-ball action");
            queue.schedule(t, x.clone(), 0.0, tau);
            for arrived in queue.pop_due(t) {
                state
                    .record_arrival(&arrived.action)
                    .expect("pending action");
            }
        }
        state
    }

    /// Every end-of-round state, starting with the initial one.
    pub fn states(&self) -> Vec<DesignState> {
        let mut out = Vec::with_capacity(self.horizon() + 1);
        let last = self.replay(|_, s, _, _| out.push(s.clone()));
        out.push(last);
        out
    }
}

/// Draws a random delay law with a mean between 0.5 and 60 rounds.
fn random_delay_model<G: Rng + ?Sized>(rng: &mut G) -> DelayModel {
    let mean: f64 = rng.random_range(0.5..60.0);
    match rng.random_range(0..5) {
        0 => DelayModel::Zero,
        1 => DelayModel::Constant(mean.floor()),
        2 => DelayModel::Exponential { mean },
        3 => DelayModel::Uniform { mean },
        _ => DelayModel::Pareto { mean },
    }
}

/// A random-policy run with `d ≤ 8`, `T ≤ 300` and `λ ∈ [lambda_min, 3]`.
///
/// A quarter of the runs play unit-norm actions, and one in twenty repeats a
/// single action, which makes several of the bounds tight.
pub fn random_history<G: Rng + ?Sized>(lambda_min: f64, rng: &mut G) -> History {
    let d = rng.random_range(1..=8);
    let horizon = rng.random_range(1..=300);
    let lambda = rng.random_range(lambda_min..=3.0f64.max(lambda_min));
    let delay = random_delay_model(rng);
    let style = rng.random_range(0..20);
    let fixed = sample_unit_ball(d, rng).normalize();
    let mut actions = Vec::with_capacity(horizon);
    let mut delays = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let set = generate_decision_set(d, 10, rng);
        let mut x = set[rng.random_range(0..set.len())].clone();
        if style == 0 {
            x = fixed.clone();
        } else if style < 6 && x.norm() > 0.0 {
            x = x.normalize();
        }
        actions.push(x);
        delays.push(sample_delay(&delay, rng));
    }
    History {
        lambda,
        actions,
        delays,
    }
}

fn fold_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

fn run_deterministic<G, F>(
    id: &str,
    n: usize,
    lambda_min: f64,
    rng: &mut G,
    mut per_history: F,
) -> LemmaReport
where
    G: Rng + ?Sized,
    F: FnMut(&History) -> f64,
{
    let worst = fold_max((0..n.max(1)).map(|_| per_history(&random_history(lambda_min, rng))));
    LemmaReport::new(id, n.max(1), worst, DETERMINISTIC_TOL)
}

/// `W̄⁻¹ = V̄⁻¹ + V̄⁻¹ Z W̄⁻¹` at every round.
pub fn check_inverse_identity<G: Rng + ?Sized>(n: usize, rng: &mut G) -> LemmaReport {
    run_deterministic("inverse_identity", n, 1.0, rng, |h| {
        fold_max(
            h.states()
                .iter()
                .map(|s| inverse_identity_residual(s).expect("positive definite")),
        )
    })
}

/// `Σ ‖X_t‖_{M_{t−1}} − Σ ((1 + G_* + τ_t)/2)·‖X_t‖²_{V̄_{t−1}⁻¹}` for one run (`λ ≥ 1`).
pub fn product_potential_violation(history: &History) -> f64 {
    let mut lhs = 0.0;
    let mut terms = Vec::with_capacity(history.horizon());
    let mut max_pending = 0usize;
    let last = history.replay(|_, before, x, tau| {
        max_pending = max_pending.max(before.pending());
        let correction = before.delay_correction().expect("positive definite");
        lhs += weighted_norm(&correction, x).expect("W̄⁻¹ ⪰ V̄⁻¹");
        let v_inv = before.v_bar_inverse().expect("positive definite");
        terms.push((tau, quad_form(&v_inv, x)));
    });
    max_pending = max_pending.max(last.pending());
    let rhs: f64 = terms
        .iter()
        .map(|(tau, q)| 0.5 * (1.0 + max_pending as f64 + tau) * q)
        .sum();
    lhs - rhs
}

pub fn check_product_potential<G: Rng + ?Sized>(n: usize, rng: &mut G) -> LemmaReport {
    run_deterministic(
        "product_potential",
        n,
        1.0,
        rng,
        product_potential_violation,
    )
}

/// Eigenvalues of `AB` against those of `A^{1/2} B A^{1/2}`, plus
/// nonnegativity, scaled by `max(1, ‖A‖‖B‖)`.
pub fn shared_eigenvalue_violation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = (max_eigenvalue(a).abs() * max_eigenvalue(b).abs()).max(1.0);
    let product = a * b;
    let complex = product.complex_eigenvalues();
    let mut real: Vec<f64> = complex.iter().map(|c| c.re).collect();
    real.sort_by(|x, y| x.total_cmp(y));
    let imag = fold_max(complex.iter().map(|c| c.im.abs()));
    let root = psd_sqrt(a);
    let sym = sym_eigenvalues(&(&root * b * &root));
    let mismatch = fold_max(real.iter().zip(&sym).map(|(x, y)| (x - y).abs()));
    let negative = -real
        .first()
        .copied()
        .unwrap_or(0.0)
        .min(sym.first().copied().unwrap_or(0.0));
    mismatch.max(imag).max(negative) / scale
}

/// Uses `A = Z_t` and `B = W̄_t⁻¹` at every tenth round and the final one.
pub fn check_shared_eigenvalues<G: Rng + ?Sized>(n: usize, rng: &mut G) -> LemmaReport {
    run_deterministic("shared_eigenvalues", n, 1.0, rng, |h| {
        let states = h.states();
        let last = states.len() - 1;
        fold_max(
            states
                .iter()
                .enumerate()
                .filter(|(i, _)| i % 10 == 0 || *i == last)
                .map(|(_, s)| {
                    shared_eigenvalue_violation(
                        s.z(),
                        &s.w_bar_inverse().expect("positive definite"),
                    )
                }),
        )
    })
}

/// `λ₁(Z_t) − G_t`.
pub fn missing_matrix_violation(state: &DesignState) -> f64 {
    state.missing_top_eigenvalue() - state.pending() as f64
}

pub fn check_missing_matrix_bound<G: Rng + ?Sized>(n: usize, rng: &mut G) -> LemmaReport {
    run_deterministic("missing_matrix_bound", n, 1.0, rng, |h| {
        fold_max(h.states().iter().map(missing_matrix_violation))
    })
}

/// `−λ_min((G_t/λ)·V̄⁻¹ − M_t)` with `M_t = W̄⁻¹ − V̄⁻¹`.
pub fn product_matrix_violation(state: &DesignState) -> f64 {
    let v_inv = state.v_bar_inverse().expect("positive definite");
    let correction = state.delay_correction().expect("positive definite");
    let diff = v_inv * (state.pending() as f64 / state.lambda()) - correction;
    -min_eigenvalue(&diff)
}

pub fn check_product_matrix_bound<G: Rng + ?Sized>(n: usize, rng: &mut G) -> LemmaReport {
    run_deterministic("product_matrix_bound", n, 1.0, rng, |h| {
        fold_max(h.states().iter().map(product_matrix_violation))
    })
}

/// `2d·log((dλ + T)/(dλ))`.
pub fn potential_bound(d: usize, lambda: f64, horizon: usize) -> f64 {
    let dl = d as f64 * lambda;
    2.0 * d as f64 * ((dl + horizon as f64) / dl).ln()
}

/// Worst of `Σ ‖X_t‖²_{V̄_{t−1}⁻¹} − 2·log(det V̄_T / det V̄₀)` and
/// `Σ ‖X_t‖²_{V̄_{t−1}⁻¹} − 2d·log((dλ+T)/(dλ))` (needs `λ ≥ 1/2`).
pub fn elliptical_potential_violation(actions: &[DVector<f64>], lambda: f64) -> f64 {
    let d = actions.first().map_or(1, |x| x.len());
    let mut state = DesignState::new(d, lambda).expect("positive lambda");
    let log_det0 = state.log_det_v_bar().expect("positive definite");
    let mut sum = 0.0;
    for x in actions {
        sum += quad_form(&state.v_bar_inverse().expect("positive definite"), x);
        state.record_action(x).expect("unit-ball action");
    }
    let det_term = 2.0 * (state.log_det_v_bar().expect("positive definite") - log_det0);
    (sum - det_term).max(sum - potential_bound(d, lambda, actions.len()))
}

pub fn check_elliptical_potential<G: Rng + ?Sized>(n: usize, rng: &mut G) -> LemmaReport {
    run_deterministic("elliptical_potential", n, 0.5, rng, |h| {
        elliptical_potential_violation(&h.actions, h.lambda)
    })
}

/// `2·log(det V̄_T / det V̄₀) − 2d·log((dλ+T)/(dλ))`.
pub fn trace_determinant_violation(actions: &[DVector<f64>], lambda: f64) -> f64 {
    let d = actions.first().map_or(1, |x| x.len());
    let mut state = DesignState::new(d, lambda).expect("positive lambda");
    let log_det0 = state.log_det_v_bar().expect("positive definite");
    for x in actions {
        state.record_action(x).expect("unit-ball action");
    }
    2.0 * (state.log_det_v_bar().expect("positive definite") - log_det0)
        - potential_bound(d, lambda, actions.len())
}

pub fn check_trace_determinant<G: Rng + ?Sized>(n: usize, rng: &mut G) -> LemmaReport {
    run_deterministic("trace_determinant", n, 0.5, rng, |h| {
        trace_determinant_violation(&h.actions, h.lambda)
    })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn z_score(stat: f64, bound: f64, se: f64) -> f64 {
    (stat - bound) / se.max(1e-12)
}

/// Number of pending rewards after each round `1..=horizon`.
pub fn pending_counts(delays: &[f64]) -> Vec<usize> {
    let horizon = delays.len();
    // arrivals[t] = rewards delivered at the end of round t
    let mut arrivals = vec![0usize; horizon + 2];
    for (i, &tau) in delays.iter().enumerate() {
        let due = arrival_round(i as u64 + 1, tau);
        if due <= horizon as u64 {
            arrivals[due as usize] += 1;
        }
    }
    let mut pending = 0usize;
    (1..=horizon)
        .map(|t| {
            pending += 1;
            pending -= arrivals[t];
            pending
        })
        .collect()
}

/// Horizon long enough for `E[G_t]` to settle.
pub fn pending_horizon(model: &DelayModel) -> usize {
    ((20.0 * model.nominal_mean()).ceil() as usize).clamp(1_000, 20_000)
}

/// Time-averaged `G_t` over the second half of each run against `1 + E[τ]`.
pub fn check_pending_bound<G: Rng + ?Sized>(
    n_runs: usize,
    model: &DelayModel,
    rng: &mut G,
) -> LemmaReport {
    let horizon = pending_horizon(model);
    let n_runs = n_runs.max(2);
    let averages: Vec<f64> = (0..n_runs)
        .map(|_| {
            let delays: Vec<f64> = (0..horizon).map(|_| sample_delay(model, rng)).collect();
            let counts = pending_counts(&delays);
            let tail = &counts[horizon / 2..];
            tail.iter().sum::<usize>() as f64 / tail.len() as f64
        })
        .collect();
    let (mean, se) = mean_and_se(&averages);
    let bound = 1.0 + model.analytic_mean();
    LemmaReport::new(
        format!("pending_bound/{}", model.kind_name()),
        n_runs,
        z_score(mean, bound, se),
        STATISTICAL_Z,
    )
}

/// Two-sided z-score of the sample mean of the delays against the analytic mean.
///
/// The standard error is the empirical one. For Pareto laws with shape below
/// 2 the variance is infinite, so this z-score has no normal limit.
pub fn check_delay_mean<G: Rng + ?Sized>(
    n_draws: usize,
    model: &DelayModel,
    rng: &mut G,
) -> LemmaReport {
    let n = n_draws.max(2);
    let draws: Vec<f64> = (0..n).map(|_| sample_delay(model, rng)).collect();
    let (mean, se) = mean_and_se(&draws);
    let z = z_score(mean, model.analytic_mean(), se).abs();
    LemmaReport::new(
        format!("delay_mean/{}", model.kind_name()),
        n,
        z,
        STATISTICAL_Z,
    )
}

/// `P(τ > E[τ] + k·E[τ]) ≤ e^{−k}` for `k = 1..5`.
pub fn check_delay_tail<G: Rng + ?Sized>(
    n_draws: usize,
    model: &DelayModel,
    rng: &mut G,
) -> LemmaReport {
    let n = n_draws.max(1);
    let draws: Vec<f64> = (0..n).map(|_| sample_delay(model, rng)).collect();
    let mean = model.analytic_mean();
    let worst = fold_max((1..=5).map(|k| {
        let bound = (-(k as f64)).exp();
        let threshold = mean * (1.0 + k as f64);
        let freq = draws.iter().filter(|&&t| t > threshold).count() as f64 / n as f64;
        z_score(freq, bound, (bound * (1.0 - bound) / n as f64).sqrt())
    }));
    LemmaReport::new(
        format!("delay_tail/{}", model.kind_name()),
        n,
        worst,
        STATISTICAL_Z,
    )
}

/// Rounds at which the supermartingale is sampled.
pub const SUPERMARTINGALE_ROUNDS: [u64; 3] = [10, 100, 1000];

/// `E[M_t(x)] ≤ 1` for `M_t(x) = exp(Σ_{s+τ_s ≤ t} (⟨x,X_s⟩η_s/R − ⟨x,X_s⟩²/2))`.
///
/// Each path is a random-policy run on the identity-link bandit with
/// clamped-Gaussian noise (`R = 1`) and exponential delays with mean 10.
pub fn check_supermartingale<G: Rng + ?Sized>(
    n_paths: usize,
    x: &DVector<f64>,
    rng: &mut G,
) -> LemmaReport {
    let d = x.len().max(1);
    let noise_bound = 1.0;
    let delay = DelayModel::Exponential { mean: 10.0 };
    let horizon = *SUPERMARTINGALE_ROUNDS.last().unwrap();
    let n_paths = n_paths.max(2);
    let mut samples = vec![Vec::with_capacity(n_paths); SUPERMARTINGALE_ROUNDS.len()];
    for _ in 0..n_paths {
        let theta = sample_unit_ball(d, rng);
        let model =
            GlmModel::new(theta, LinkKind::Identity, noise_bound, 1.0).expect("valid model");
        let mut queue = DeliveryQueue::new();
        let mut log_m = 0.0;
        let mut next = 0;
        for t in 1..=horizon {
            let set = generate_decision_set(d, 10, rng);
            let action = set[rng.random_range(0..set.len())].clone();
            let noise = sample_reward(&model, &action, rng) - model.expected_reward(&action);
            // the noise rides in the reward slot until the sample arrives
            queue.schedule(t, action, noise, sample_delay(&delay, rng));
            for arrived in queue.pop_due(t) {
                let proj = x.dot(&arrived.action);
                log_m += proj * arrived.reward / noise_bound - 0.5 * proj * proj;
            }
            if t == SUPERMARTINGALE_ROUNDS[next] {
                samples[next].push(log_m.exp());
                next += 1;
            }
        }
    }
    let worst = fold_max(samples.iter().map(|vals| {
        let (mean, se) = mean_and_se(vals);
        z_score(mean, 1.0, se)
    }));
    LemmaReport::new("supermartingale", n_paths, worst, STATISTICAL_Z)
}

/// Sizes for the statistical part of the default suite.
#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub instances: usize,
    pub pending_runs: usize,
    pub tail_draws: usize,
    pub supermartingale_paths: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            instances: 1_000,
            pending_runs: 200,
            tail_draws: 100_000,
            supermartingale_paths: 2_000,
        }
    }
}

/// Runs every check with generators derived from `seed`.
pub fn run_suite(opts: SuiteOptions, seed: u64) -> Vec<LemmaReport> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    let rng_for = |i: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i);
        rng
    };
    let n = opts.instances;
    let mut reports = vec![
        check_inverse_identity(n, &mut rng_for(1)),
        check_product_potential(n, &mut rng_for(2)),
        check_shared_eigenvalues(n, &mut rng_for(3)),
        check_missing_matrix_bound(n, &mut rng_for(4)),
        check_product_matrix_bound(n, &mut rng_for(5)),
        check_elliptical_potential(n, &mut rng_for(6)),
        check_trace_determinant(n, &mut rng_for(7)),
    ];
    let models = [
        DelayModel::Exponential { mean: 25.0 },
        DelayModel::Uniform { mean: 25.0 },
        DelayModel::Pareto { mean: 25.0 },
    ];
    for (i, model) in models.iter().enumerate() {
        reports.push(check_pending_bound(
            opts.pending_runs,
            model,
            &mut rng_for(10 + i as u64),
        ));
    }

    reports.push(check_delay_tail(
        opts.tail_draws,
        &DelayModel::Exponential { mean: 100.0 },
        &mut rng_for(20),
    ));
    let x = DVector::from_element(3, 1.0 / 3f64.sqrt());
    reports.push(check_supermartingale(
        opts.supermartingale_paths,
        &x,
        &mut rng_for(30),
    ));
    reports
}
