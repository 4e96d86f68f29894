//! Exponential-family reward models and the penalized maximum-likelihood solver.
//!
//! Rewards follow `Y = μ(⟨x, θ*⟩) + η` for a strictly increasing link `μ`.
//! The estimator maximizes the ridge-penalized log-likelihood
//!
//! ```text
//! L(θ) = Σ_s (Y_s·z_s − b(z_s)) − (α·a(φ)/2)·‖θ‖²,   z_s = X_sᵀθ,  b' = μ
//! ```
//!
//! whose gradient is `Σ_s (Y_s − μ(z_s)) X_s − α·a(φ)·θ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlmError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("newton solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error("penalty weight must be positive, got {0}")]
    NonPositivePenalty(f64),
    #[error("parameter norm {norm} exceeds bound m1 = {bound}")]
    ParameterOutOfBounds { norm: f64, bound: f64 },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
}

/// Which canonical link the reward model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    /// Gaussian rewards, `μ(z) = z`.
    Identity,
    /// Bernoulli rewards, `μ(z) = 1/(1+e^{-z})`.
    Logistic,
    /// Poisson rewards, `μ(z) = e^z`.
    Exponential,
}

impl LinkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::Identity => "identity",
            LinkKind::Logistic => "logistic",
            LinkKind::Exponential => "exponential",
        }
    }
}

/// A link function together with the constants the confidence sets need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkFunction {
    pub kind: LinkKind,
    /// Upper bound on `μ̇` over `[-m₁, m₁]`.
    pub lipschitz: f64,
    /// Lower bound `κ` on `μ̇` over `[-m₁, m₁]`.
    pub curvature_floor: f64,
    /// Dispersion factor `a(φ)`.
    pub dispersion: f64,
}

impl LinkFunction {
    /// Builds the link with constants derived for parameters bounded by `m1`
    /// and rewards with noise bound `noise_bound`.
    ///
    /// Gaussian rewards use `a(φ) = R²`; Bernoulli and Poisson use `a(φ) = 1`.
    pub fn new(kind: LinkKind, m1: f64, noise_bound: f64) -> Self {
        let (lipschitz, dispersion) = match kind {
            LinkKind::Identity => (1.0, noise_bound * noise_bound),
            LinkKind::Logistic => (0.25, 1.0),
            LinkKind::Exponential => (m1.exp(), 1.0),
        };
        Self {
            kind,
            lipschitz,
            curvature_floor: curvature_floor_for(kind, m1),
            dispersion,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        link_eval(self.kind, z)
    }

    pub fn deriv(&self, z: f64) -> f64 {
        link_deriv(self.kind, z)
    }

    /// Log-partition function `b(z)` with `b' = μ`.
    pub fn cumulant(&self, z: f64) -> f64 {
        match self.kind {
            LinkKind::Identity => 0.5 * z * z,
            LinkKind::Logistic => softplus(z),
            LinkKind::Exponential => z.exp(),
        }
    }

    /// Checks strict monotonicity on `[-2m₁, 2m₁]` and `κ ≤ μ̇ ≤ L_μ` on
    /// `[-m₁, m₁]` over a probe grid of `n` points.
    pub fn satisfies_assumptions(&self, m1: f64, n: usize) -> bool {
        let n = n.max(2);
        let grid =
            |lo: f64, hi: f64| (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64);
        let monotone = grid(-2.0 * m1, 2.0 * m1)
            .map(|z| self.eval(z))
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1] > w[0]);
        let slack = 1e-12;
        let bounded = grid(-m1, m1).all(|z| {
            let d = self.deriv(z);
            d >= self.curvature_floor - slack && d <= self.lipschitz + slack
        });
        monotone && bounded
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean reward `μ(z)`.
pub fn link_eval(kind: LinkKind, z: f64) -> f64 {
    match kind {
        LinkKind::Identity => z,
        LinkKind::Logistic => sigmoid(z),
        LinkKind::Exponential => z.exp(),
    }
}

/// First derivative `μ̇(z)`.
pub fn link_deriv(kind: LinkKind, z: f64) -> f64 {
    match kind {
        LinkKind::Identity => 1.0,
        LinkKind::Logistic => {
            let s = sigmoid(z);
            s * (1.0 - s)
        }
        LinkKind::Exponential => z.exp(),
    }
}

/// Smallest value of `μ̇` over `[-m₁, m₁]`.
///
/// The logistic derivative is symmetric and decreasing in `|z|`, so its
/// minimum sits at `±m₁`; the exponential one is increasing.
pub fn curvature_floor_for(kind: LinkKind, m1: f64) -> f64 {
    match kind {
        LinkKind::Identity => 1.0,
        LinkKind::Logistic => link_deriv(LinkKind::Logistic, m1),
        LinkKind::Exponential => (-m1).exp(),
    }
}

/// Ground-truth reward model.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmModel {
    pub theta_star: DVector<f64>,
    pub link: LinkFunction,
    pub noise_bound: f64,
    pub norm_bound: f64,
}

impl GlmModel {
    pub fn new(
        theta_star: DVector<f64>,
        kind: LinkKind,
        noise_bound: f64,
        norm_bound: f64,
    ) -> Result<Self, GlmError> {
        if !(noise_bound >= 0.0 && noise_bound.is_finite()) {
            return Err(GlmError::InvalidParameter(format!(
                "noise bound {noise_bound}"
            )));
        }
        if !(norm_bound > 0.0 && norm_bound.is_finite()) {
            return Err(GlmError::InvalidParameter(format!(
                "norm bound {norm_bound}"
            )));
        }
        let norm = theta_star.norm();
        if norm > norm_bound * (1.0 + 1e-12) {
            return Err(GlmError::ParameterOutOfBounds {
                norm,
                bound: norm_bound,
            });
        }
        Ok(Self {
            theta_star,
            link: LinkFunction::new(kind, norm_bound, noise_bound),
            noise_bound,
            norm_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn expected_reward(&self, action: &DVector<f64>) -> f64 {
        self.link.eval(action.dot(&self.theta_star))
    }

    /// Poisson noise is unbounded, so `|η| ≤ R` cannot hold for it.
    pub fn noise_is_bounded(&self) -> bool {
        self.link.kind != LinkKind::Exponential
    }
}

/// Draws one reward for `action`.
///
/// Gaussian noise has standard deviation `R/3` and is clamped to `[-R, R]`.
pub fn sample_reward<G: Rng + ?Sized>(model: &GlmModel, action: &DVector<f64>, rng: &mut G) -> f64 {
    let mean = model.expected_reward(action);
    match model.link.kind {
        LinkKind::Identity => {
            let r = model.noise_bound;
            if r == 0.0 {
                return mean;
            }
            let noise = Normal::new(0.0, r / 3.0)
                .expect("finite positive std")
                .sample(rng);
            mean + noise.clamp(-r, r)
        }
        LinkKind::Logistic => {
            let p = mean.clamp(0.0, 1.0);
            if Bernoulli::new(p)
                .expect("probability in [0, 1]")
                .sample(rng)
            {
                1.0
            } else {
                0.0
            }
        }
        LinkKind::Exponential => match Poisson::new(mean) {
            Ok(p) => p.sample(rng),
            Err(_) => 0.0,
        },
    }
}

/// A reward that has been delivered to the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSample {
    pub action: DVector<f64>,
    pub reward: f64,
    pub origin_round: u64,
}

/// Arrived samples stored contiguously, with running sufficient statistics
/// `Σ X Xᵀ` and `Σ Y X` so the identity link never needs a pass over history.
#[derive(Debug, Clone)]
pub struct Samples {
    dim: usize,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    origins: Vec<u64>,
    gram: DMatrix<f64>,
    moment: DVector<f64>,
}

impl Samples {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            actions: Vec::new(),
            rewards: Vec::new(),
            origins: Vec::new(),
            gram: DMatrix::zeros(dim, dim),
            moment: DVector::zeros(dim),
        }
    }

    pub fn from_samples(dim: usize, samples: &[ObservedSample]) -> Result<Self, GlmError> {
        let mut out = Self::new(dim);
        for s in samples {
            out.push(s)?;
        }
        Ok(out)
    }

    pub fn push(&mut self, sample: &ObservedSample) -> Result<(), GlmError> {
        if sample.action.len() != self.dim {
            return Err(GlmError::DimensionMismatch {
                expected: self.dim,
                got: sample.action.len(),
            });
        }
        self.actions.extend(sample.action.iter());
        self.rewards.push(sample.reward);
        self.origins.push(sample.origin_round);
        self.gram.ger(1.0, &sample.action, &sample.action, 1.0);
        self.moment.axpy(sample.reward, &sample.action, 1.0);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn reward(&self, i: usize) -> f64 {
        self.rewards[i]
    }

    pub fn origin_round(&self, i: usize) -> u64 {
        self.origins[i]
    }

    /// `Σ X_s X_sᵀ` over stored samples.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `Σ Y_s X_s` over stored samples.
    pub fn moment(&self) -> &DVector<f64> {
        &self.moment
    }

    fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.actions
            .chunks_exact(self.dim.max(1))
            .zip(self.rewards.iter().copied())
    }
}

fn check_dim(samples: &Samples, theta: &DVector<f64>) -> Result<(), GlmError> {
    if theta.len() != samples.dim() {
        return Err(GlmError::DimensionMismatch {
            expected: samples.dim(),
            got: theta.len(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Value, gradient and negated Hessian of the penalized log-likelihood.
struct Evaluation {
    value: f64,
    grad: DVector<f64>,
    neg_hessian: DMatrix<f64>,
}

fn evaluate(
    samples: &Samples,
    theta: &DVector<f64>,
    penalty: f64,
    link: &LinkFunction,
) -> Evaluation {
    let d = samples.dim();
    let mut neg_hessian = DMatrix::<f64>::identity(d, d) * penalty;
    let mut grad = -theta * penalty;
    let mut value = -0.5 * penalty * theta.norm_squared();

    if link.kind == LinkKind::Identity {
        let gram_theta = samples.gram() * theta;
        value += samples.moment().dot(theta) - 0.5 * theta.dot(&gram_theta);
        grad += samples.moment() - gram_theta;
        neg_hessian += samples.gram();
        return Evaluation {
            value,
            grad,
            neg_hessian,
        };
    }

    // Only the upper triangle is accumulated, then mirrored.
    let h = neg_hessian.as_mut_slice();
    let g = grad.as_mut_slice();
    for (x, y) in samples.iter() {
        let z = dot(x, theta);
        let (mu, mu_dot, b) = match link.kind {
            LinkKind::Logistic => {
                let s = sigmoid(z);
                (s, s * (1.0 - s), softplus(z))
            }
            LinkKind::Exponential => {
                let e = z.exp();
                (e, e, e)
            }
            LinkKind::Identity => unreachable!(),
        };
        value += y * z - b;
        let resid = y - mu;
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += resid * xi;
        }
        for j in 0..d {
            let wxj = mu_dot * x[j];
            let col = &mut h[j * d..j * d + j + 1];
            for (hij, xi) in col.iter_mut().zip(&x[..=j]) {
                *hij += wxj * xi;
            }
        }
    }
    for j in 0..d {
        for i in 0..j {
            h[i * d + j] = h[j * d + i];
        }
    }
    Evaluation {
        value,
        grad,
        neg_hessian,
    }
}

/// Penalized log-likelihood with penalty weight `α·a(φ)`.
pub fn penalized_log_likelihood(
    samples: &Samples,
    theta: &DVector<f64>,
    alpha: f64,
    link: &LinkFunction,
) -> Result<f64, GlmError> {
    check_dim(samples, theta)?;
    let penalty = alpha * link.dispersion;
    let mut value = -0.5 * penalty * theta.norm_squared();
    for (x, y) in samples.iter() {
        let z = dot(x, theta);
        value += y * z - link.cumulant(z);
    }
    Ok(value)
}

/// `Σ_s (Y_s − μ(X_sᵀθ)) X_s − α·a(φ)·θ`.
pub fn grad_penalized(
    samples: &Samples,
    theta: &DVector<f64>,
    alpha: f64,
    link: &LinkFunction,
) -> Result<DVector<f64>, GlmError> {
    check_dim(samples, theta)?;
    Ok(evaluate(samples, theta, alpha * link.dispersion, link).grad)
}

/// `α·a(φ)·I + Σ_s μ̇(X_sᵀθ) X_s X_sᵀ`, the Hessian of the negative objective.
pub fn hessian_penalized(
    samples: &Samples,
    theta: &DVector<f64>,
    alpha: f64,
    link: &LinkFunction,
) -> Result<DMatrix<f64>, GlmError> {
    check_dim(samples, theta)?;
    Ok(evaluate(samples, theta, alpha * link.dispersion, link).neg_hessian)
}

/// Newton solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 60,
        }
    }
}

/// Maximizes the penalized log-likelihood by damped Newton from `init`.
///
/// Steps are halved until the objective does not decrease. Returns the
/// iterate whose gradient norm is at most `opts.tol`.
pub fn fit_penalized_mle(
    samples: &Samples,
    alpha: f64,
    link: &LinkFunction,
    init: &DVector<f64>,
    opts: SolverOptions,
) -> Result<DVector<f64>, GlmError> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(GlmError::NonPositivePenalty(alpha));
    }
    check_dim(samples, init)?;
    let penalty = alpha * link.dispersion;
    let mut theta = init.clone();
    let mut eval = evaluate(samples, &theta, penalty, link);

    for iter in 0..opts.max_iter {
        let grad_norm = eval.grad.norm();
        if grad_norm <= opts.tol {
            return Ok(theta);
        }
        let step = match eval.neg_hessian.clone().cholesky() {
            Some(chol) => chol.solve(&eval.grad),
            None => {
                return Err(GlmError::NonConvergence {
                    iterations: iter,
                    grad_norm,
                })
            }
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = &theta + &step * scale;
            let next = evaluate(samples, &candidate, penalty, link);
            // Rounding makes the objective flat near the optimum; a tiny
            // relative slack keeps the final step from being rejected.
            let slack = 1e-14 * (1.0 + eval.value.abs());
            if next.value.is_finite() && next.value >= eval.value - slack {
                accepted = Some((candidate, next));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((candidate, next)) => {
                theta = candidate;
                eval = next;
            }
            None => {
                return Err(GlmError::NonConvergence {
                    iterations: iter + 1,
                    grad_norm,
                })
            }
        }
    }
    let grad_norm = eval.grad.norm();
    if grad_norm <= opts.tol {
        Ok(theta)
    } else {
        Err(GlmError::NonConvergence {
            iterations: opts.max_iter,
            grad_norm,
        })
    }
}
