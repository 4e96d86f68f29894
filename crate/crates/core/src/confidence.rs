//! Confidence ellipsoids `{θ : ‖θ̂ − θ‖_W̄ ≤ √β}` and the optimistic index.

use nalgebra::{DMatrix, DVector};

use crate::design::{weighted_norm, DesignError, DesignState};
use crate::glm::LinkFunction;
use crate::linalg::quad_form;

/// Boundary slack for membership tests.
pub const MEMBERSHIP_SLACK: f64 = 1e-9;

/// Width `√β_t = √λ·m₁ + (R/κ)·√(2·log(det(W̄)^{1/2} / (δ·λ^{d/2})))`.
///
/// The log-determinant comes from a Cholesky factor, so large `t` does not
/// overflow. The log argument is at least `1/δ` because `det(W̄) ≥ λ^d`.
pub fn beta_width(
    state: &DesignState,
    m1: f64,
    noise_bound: f64,
    kappa: f64,
    delta: f64,
) -> Result<f64, DesignError> {
    let d = state.dim() as f64;
    let lambda = state.lambda();
    let log_ratio = 0.5 * state.log_det_w_bar()? - 0.5 * d * lambda.ln() - delta.ln();
    Ok(lambda.sqrt() * m1 + (noise_bound / kappa) * (2.0 * log_ratio.max(0.0)).sqrt())
}

#[derive(Debug, Clone)]
pub struct ConfidenceSet {
    theta_hat: DVector<f64>,
    sqrt_beta: f64,
    shape: DMatrix<f64>,
    shape_inverse: DMatrix<f64>,
    lambda: f64,
}

impl ConfidenceSet {
    pub fn new(
        theta_hat: DVector<f64>,
        sqrt_beta: f64,
        shape: DMatrix<f64>,
        lambda: f64,
    ) -> Result<Self, DesignError> {
        if shape.nrows() != theta_hat.len() {
            return Err(DesignError::DimensionMismatch {
                expected: shape.nrows(),
                got: theta_hat.len(),
            });
        }
        let shape_inverse = crate::linalg::spd_inverse(&shape).ok_or(DesignError::Singular)?;
        Ok(Self {
            theta_hat,
            sqrt_beta,
            shape,
            shape_inverse,
            lambda,
        })
    }

    /// Builds the set from the observed design matrix of `state`.
    pub fn from_design(
        state: &DesignState,
        theta_hat: DVector<f64>,
        sqrt_beta: f64,
    ) -> Result<Self, DesignError> {
        Self::new(theta_hat, sqrt_beta, state.w_bar().clone(), state.lambda())
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn sqrt_beta(&self) -> f64 {
        self.sqrt_beta
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn shape_inverse(&self) -> &DMatrix<f64> {
        &self.shape_inverse
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `‖θ̂ − θ‖_W̄`.
    pub fn distance(&self, theta: &DVector<f64>) -> f64 {
        let diff = &self.theta_hat - theta;
        quad_form(&self.shape, &diff).max(0.0).sqrt()
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        membership(self, theta)
    }

    /// `‖x‖_{W̄⁻¹}`, the half-width of the ellipsoid along `x`.
    pub fn exploration_width(&self, x: &DVector<f64>) -> f64 {
        weighted_norm(&self.shape_inverse, x).unwrap_or(0.0)
    }

    /// `max_{θ ∈ C} xᵀθ = xᵀθ̂ + √β·‖x‖_{W̄⁻¹}`.
    pub fn upper_linear(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.theta_hat) + self.sqrt_beta * self.exploration_width(x)
    }
}

pub fn membership(cs: &ConfidenceSet, theta: &DVector<f64>) -> bool {
    cs.distance(theta) <= cs.sqrt_beta + MEMBERSHIP_SLACK
}

/// `μ(xᵀθ̂ + √β·‖x‖_{W̄⁻¹})`, the largest mean reward any `θ` in the set assigns to `x`.
///
/// Because `μ` is increasing, ranking arms by this index is the same as the
/// joint maximization of `μ(xᵀθ)` over arms and the ellipsoid.
pub fn optimistic_index(cs: &ConfidenceSet, x: &DVector<f64>, link: &LinkFunction) -> f64 {
    link.eval(cs.upper_linear(x))
}
