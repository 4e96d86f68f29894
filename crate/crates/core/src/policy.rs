//! Sequential decision policies.
//!
//! * `DelayedOfuGlm` plays the arm with the largest optimistic index over the
//!   confidence set built from the arrived rewards only.
//! * `DelayInflatedUcb` is a stand-in for bonus-inflation approaches: same
//!   estimator, but the exploration bonus is multiplied by `√(1 + G_t)` where
//!   `G_t` is the number of missing rewards. It has no forced-exploration
//!   phase, so it approximates rather than replicates published variants.
//! * `Random` picks uniformly and serves as a linear-regret control.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{beta_width, optimistic_index, ConfidenceSet};
use crate::design::{DesignError, DesignState};
use crate::env::argmax_lowest;
use crate::glm::{
    fit_penalized_mle, GlmError, LinkFunction, LinkKind, ObservedSample, Samples, SolverOptions,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("decision set is empty")]
    EmptyDecisionSet,
    #[error("invalid policy configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Design(#[from] DesignError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    DelayedOfuGlm,
    DelayInflatedUcb,
    Random,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::DelayedOfuGlm => "delayed_ofu_glm",
            PolicyKind::DelayInflatedUcb => "delay_inflated_ucb",
            PolicyKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub alpha: f64,
    pub delta: f64,
    pub m1: f64,
    pub noise_bound: f64,
    pub kappa: f64,
    pub dispersion: f64,
    pub solver: SolverOptions,
}

impl PolicyConfig {
    /// Derives `κ` and `a(φ)` from the link, the norm bound and the noise bound.
    pub fn for_link(
        kind: PolicyKind,
        link: LinkKind,
        alpha: f64,
        delta: f64,
        m1: f64,
        noise_bound: f64,
    ) -> Self {
        let l = LinkFunction::new(link, m1, noise_bound);
        Self {
            kind,
            alpha,
            delta,
            m1,
            noise_bound,
            kappa: l.curvature_floor,
            dispersion: l.dispersion,
            solver: SolverOptions::default(),
        }
    }

    /// `λ = α·a(φ)/κ`.
    pub fn lambda(&self) -> f64 {
        self.alpha * self.dispersion / self.kappa
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |msg: String| Err(PolicyError::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha = {}", self.alpha));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} is not in (0, 1)", self.delta));
        }
        for (name, v) in [
            ("m1", self.m1),
            ("r", self.noise_bound),
            ("kappa", self.kappa),
            ("a(phi)", self.dispersion),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v}"));
            }
        }
        if self.kind == PolicyKind::DelayedOfuGlm && self.lambda() < 1.0 {
            return bad(format!(
                "lambda = alpha*a(phi)/kappa = {} must be at least 1",
                self.lambda()
            ));
        }
        Ok(())
    }
}

/// Learner state for one run.
#[derive(Debug, Clone)]
pub struct Policy {
    config: PolicyConfig,
    link: LinkFunction,
    design: DesignState,
    samples: Samples,
    confidence: ConfidenceSet,
}

impl Policy {
    pub fn new(config: PolicyConfig, link: LinkKind, dim: usize) -> Result<Self, PolicyError> {
        config.validate()?;
        let link = LinkFunction {
            kind: link,
            curvature_floor: config.kappa,
            dispersion: config.dispersion,
            ..LinkFunction::new(link, config.m1, config.noise_bound)
        };
        let design = DesignState::new(dim, config.lambda())?;
        let sqrt_beta = beta_width(
            &design,
            config.m1,
            config.noise_bound,
            config.kappa,
            config.delta,
        )?;
        let confidence = ConfidenceSet::from_design(&design, DVector::zeros(dim), sqrt_beta)?;
        Ok(Self {
            config,
            link,
            design,
            samples: Samples::new(dim),
            confidence,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn link(&self) -> &LinkFunction {
        &self.link
    }

    pub fn design(&self) -> &DesignState {
        &self.design
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        self.confidence.theta_hat()
    }

    pub fn sqrt_beta(&self) -> f64 {
        self.confidence.sqrt_beta()
    }

    /// The set `C_{t−1}` used for the next decision.
    pub fn confidence_set(&self) -> &ConfidenceSet {
        &self.confidence
    }

    /// Bonus added to `xᵀθ̂` before applying the link.
    pub fn exploration_bonus(&self, x: &DVector<f64>) -> f64 {
        let base = self.confidence.sqrt_beta() * self.confidence.exploration_width(x);
        match self.config.kind {
            PolicyKind::DelayInflatedUcb => base * (1.0 + self.design.pending() as f64).sqrt(),
            _ => base,
        }
    }

    /// Score used to rank arms; `None` for the random policy.
    pub fn index(&self, x: &DVector<f64>) -> Option<f64> {
        match self.config.kind {
            PolicyKind::DelayedOfuGlm => Some(optimistic_index(&self.confidence, x, &self.link)),
            PolicyKind::DelayInflatedUcb => Some(
                self.link
                    .eval(x.dot(self.confidence.theta_hat()) + self.exploration_bonus(x)),
            ),
            PolicyKind::Random => None,
        }
    }

    /// Chooses an arm (lowest index on ties) and records it as played.
    pub fn select_action<G: Rng + ?Sized>(
        &mut self,
        decision_set: &[DVector<f64>],
        rng: &mut G,
    ) -> Result<usize, PolicyError> {
        if decision_set.is_empty() {
            return Err(PolicyError::EmptyDecisionSet);
        }
        let chosen = match self.config.kind {
            PolicyKind::Random => rng.random_range(0..decision_set.len()),
            _ => argmax_lowest(
                decision_set
                    .iter()
                    .map(|x| self.index(x).unwrap_or(f64::NEG_INFINITY)),
            )
            .map(|(i, _)| i)
            .unwrap_or(0),
        };
        self.design.record_action(&decision_set[chosen])?;
        Ok(chosen)
    }

    /// Folds newly arrived rewards into `W̄`, refits `θ̂` from a warm start and
    /// recomputes `√β`. Does nothing when no reward arrived.
    pub fn observe(&mut self, arrivals: &[ObservedSample]) -> Result<(), PolicyError> {
        if arrivals.is_empty() {
            return Ok(());
        }
        for sample in arrivals {
            self.design.record_arrival(&sample.action)?;
            self.samples.push(sample)?;
        }
        let theta_hat = fit_penalized_mle(
            &self.samples,
            self.config.alpha,
            &self.link,
            self.confidence.theta_hat(),
            self.config.solver,
        )?;
        let sqrt_beta = beta_width(
            &self.design,
            self.config.m1,
            self.config.noise_bound,
            self.config.kappa,
            self.config.delta,
        )?;
        self.confidence = ConfidenceSet::from_design(&self.design, theta_hat, sqrt_beta)?;
        Ok(())
    }
}
