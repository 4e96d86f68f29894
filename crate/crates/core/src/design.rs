//! Total, observed and missing design matrices under delayed arrivals.
//!
//! `V̄ = λI + Σ X Xᵀ` over every played action, `W̄ = λI + Σ X Xᵀ` over the
//! actions whose reward has arrived, and `Z = V̄ − W̄` over the pending ones.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{max_eigenvalue, quad_form, spd_inverse, spd_log_det};

/// Norm slack for actions on the unit sphere after floating-point rounding.
pub const NORM_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("regularizer must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("action norm {0} exceeds 1")]
    NormViolation(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("arrival recorded with no pending action")]
    ArrivalUnderflow,
    #[error("matrix is not positive definite")]
    Singular,
    #[error("quadratic form {0:e} is negative; matrix is not positive semi-definite")]
    NotPsd(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    lambda: f64,
    v_bar: DMatrix<f64>,
    w_bar: DMatrix<f64>,
    z: DMatrix<f64>,
    pending: usize,
    round: u64,
}

impl DesignState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self, DesignError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(DesignError::NonPositiveLambda(lambda));
        }
        let base = DMatrix::identity(dim, dim) * lambda;
        Ok(Self {
            lambda,
            v_bar: base.clone(),
            w_bar: base,
            z: DMatrix::zeros(dim, dim),
            pending: 0,
            round: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.v_bar.nrows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn v_bar(&self) -> &DMatrix<f64> {
        &self.v_bar
    }

    pub fn w_bar(&self) -> &DMatrix<f64> {
        &self.w_bar
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Number of played actions whose reward has not arrived (`G_t`).
    pub fn pending(&self) -> usize {
        self.pending
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    fn check(&self, x: &DVector<f64>) -> Result<(), DesignError> {
        if x.len() != self.dim() {
            return Err(DesignError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let norm = x.norm();
        if norm > 1.0 + NORM_SLACK {
            return Err(DesignError::NormViolation(norm));
        }
        Ok(())
    }

    /// A new action was played: it enters `V̄` and `Z`.
    pub fn record_action(&mut self, x: &DVector<f64>) -> Result<(), DesignError> {
        self.check(x)?;
        self.v_bar.ger(1.0, x, x, 1.0);
        self.z.ger(1.0, x, x, 1.0);
        self.pending += 1;
        self.round += 1;
        Ok(())
    }

    /// The reward of a previously played action arrived: it moves from `Z` to `W̄`.
    pub fn record_arrival(&mut self, x: &DVector<f64>) -> Result<(), DesignError> {
        self.check(x)?;
        if self.pending == 0 {
            return Err(DesignError::ArrivalUnderflow);
        }
        self.w_bar.ger(1.0, x, x, 1.0);
        self.z.ger(-1.0, x, x, 1.0);
        self.pending -= 1;
        Ok(())
    }

    /// `‖V̄ − W̄ − Z‖_F`.
    pub fn additivity_residual(&self) -> f64 {
        (&self.v_bar - &self.w_bar - &self.z).norm()
    }

    pub fn v_bar_inverse(&self) -> Result<DMatrix<f64>, DesignError> {
        spd_inverse(&self.v_bar).ok_or(DesignError::Singular)
    }

    pub fn w_bar_inverse(&self) -> Result<DMatrix<f64>, DesignError> {
        spd_inverse(&self.w_bar).ok_or(DesignError::Singular)
    }

    pub fn log_det_w_bar(&self) -> Result<f64, DesignError> {
        spd_log_det(&self.w_bar).ok_or(DesignError::Singular)
    }

    pub fn log_det_v_bar(&self) -> Result<f64, DesignError> {
        spd_log_det(&self.v_bar).ok_or(DesignError::Singular)
    }

    /// `M = W̄⁻¹ − V̄⁻¹`, which equals `V̄⁻¹ Z W̄⁻¹` but is exactly symmetric.
    pub fn delay_correction(&self) -> Result<DMatrix<f64>, DesignError> {
        Ok(self.w_bar_inverse()? - self.v_bar_inverse()?)
    }

    /// Largest eigenvalue of the missing design matrix.
    pub fn missing_top_eigenvalue(&self) -> f64 {
        max_eigenvalue(&self.z)
    }
}

/// `√(xᵀ M x)` for a positive semi-definite `M`; tiny negative forms clamp to zero.
pub fn weighted_norm(m: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64, DesignError> {
    let q = quad_form(m, x);
    if q < -1e-12 {
        return Err(DesignError::NotPsd(q));
    }
    Ok(q.max(0.0).sqrt())
}

/// `‖W̄⁻¹ − (V̄⁻¹ + V̄⁻¹ Z W̄⁻¹)‖_F`, which is zero in exact arithmetic.
pub fn inverse_identity_residual(state: &DesignState) -> Result<f64, DesignError> {
    let w_inv = state.w_bar_inverse()?;
    let v_inv = state.v_bar_inverse()?;
    let rhs = &v_inv + &v_inv * state.z() * &w_inv;
    Ok((w_inv - rhs).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use proptest::prelude::*;

    fn e(d: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    #[test]
    fn init_state() {
        let s = DesignState::new(2, 1.0).unwrap();
        assert_eq!(s.v_bar(), &DMatrix::<f64>::identity(2, 2));
        assert_eq!(s.z(), &DMatrix::<f64>::zeros(2, 2));
        assert_eq!(s.additivity_residual(), 0.0);
        let s3 = DesignState::new(3, 2.0).unwrap();
        assert!((s3.log_det_w_bar().unwrap().exp() - 8.0).abs() < 1e-12);
        assert_eq!(
            DesignState::new(2, 0.0),
            Err(DesignError::NonPositiveLambda(0.0))
        );
    }

    #[test]
    fn action_then_arrival() {
        let mut s = DesignState::new(2, 1.0).unwrap();
        s.record_action(&e(2, 0)).unwrap();
        assert_eq!(
            s.v_bar(),
            &DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]))
        );
        assert_eq!(s.w_bar(), &DMatrix::<f64>::identity(2, 2));
        assert_eq!(s.pending(), 1);
        s.record_arrival(&e(2, 0)).unwrap();
        assert_eq!(s.z(), &DMatrix::<f64>::zeros(2, 2));
        assert_eq!(s.w_bar(), s.v_bar());
        assert_eq!(s.pending(), 0);
    }

    #[test]
    fn zero_action_only_counts() {
        let mut s = DesignState::new(3, 1.0).unwrap();
        let before = s.clone();
        s.record_action(&DVector::zeros(3)).unwrap();
        assert_eq!(s.v_bar(), before.v_bar());
        assert_eq!(s.z(), before.z());
        assert_eq!(s.pending(), 1);
        assert_eq!(s.round(), 1);
    }

    #[test]
    fn errors() {
        let mut s = DesignState::new(2, 1.0).unwrap();
        assert_eq!(
            s.record_arrival(&e(2, 0)),
            Err(DesignError::ArrivalUnderflow)
        );
        assert!(matches!(
            s.record_action(&DVector::from_vec(vec![1.0, 1.0])),
            Err(DesignError::NormViolation(_))
        ));
        assert!(matches!(
            s.record_action(&e(3, 0)),
            Err(DesignError::DimensionMismatch { .. })
        ));
        let not_psd = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
        assert!(matches!(
            weighted_norm(&not_psd, &e(2, 0)),
            Err(DesignError::NotPsd(_))
        ));
    }

    #[test]
    fn weighted_norm_cases() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(weighted_norm(&i2, &e(2, 0)).unwrap(), 1.0);
        assert!((weighted_norm(&(i2 * 2.0), &e(2, 0)).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weighted_norm_matches_eigendecomposition() {
        // ‖x‖²_M = Σ λ_i (u_iᵀ x)² for M = U diag(λ) Uᵀ.
        let a = DMatrix::from_row_slice(3, 3, &[0.3, -1.2, 0.5, 0.8, 0.1, -0.7, 1.1, 0.4, 0.9]);
        let m = &a * a.transpose();
        let x: DVector<f64> = DVector::from_vec(vec![0.2, -0.5, 0.7]);
        let eig = m.clone().symmetric_eigen();
        let oracle: f64 = (0..3)
            .map(|i| {
                let p: f64 = eig.eigenvectors.column(i).dot(&x);
                eig.eigenvalues[i] * p * p
            })
            .sum::<f64>()
            .sqrt();
        assert!((weighted_norm(&m, &x).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn inverse_identity_small_cases() {
        let mut s = DesignState::new(3, 1.0).unwrap();
        assert_eq!(inverse_identity_residual(&s).unwrap(), 0.0);
        s.record_action(&DVector::from_vec(vec![0.6, 0.0, 0.8]))
            .unwrap();
        assert!(inverse_identity_residual(&s).unwrap() <= 1e-10);
    }

    fn unit_ball_vec(raw: Vec<f64>) -> DVector<f64> {
        let v = DVector::from_vec(raw);
        let n = v.norm();
        if n > 1.0 {
            v / n
        } else {
            v
        }
    }

    /// Rebuilds all three matrices from the raw history.
    fn rebuild(
        d: usize,
        lambda: f64,
        history: &[(DVector<f64>, bool)],
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let mut v = DMatrix::identity(d, d) * lambda;
        let mut w = v.clone();
        let mut z = DMatrix::zeros(d, d);
        for (x, arrived) in history {
            let outer = x * x.transpose();
            v += &outer;
            if *arrived {
                w += &outer;
            } else {
                z += &outer;
            }
        }
        (v, w, z)
    }

    proptest! {
        #[test]
        fn bookkeeping_invariants(
            d in 1usize..6,
            lambda in 0.5f64..4.0,
            raw in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 6), any::<bool>()), 1..50),
        ) {
            let mut s = DesignState::new(d, lambda).unwrap();
            let mut history = Vec::new();
            for (r, arrive) in raw {
                let x = unit_ball_vec(r[..d].to_vec());
                s.record_action(&x).unwrap();
                history.push((x.clone(), false));
                if arrive {
                    // deliver the oldest pending action
                    let idx = history.iter().position(|(_, a)| !a).unwrap();
                    let xa = history[idx].0.clone();
                    s.record_arrival(&xa).unwrap();
                    history[idx].1 = true;
                }
                prop_assert!(s.additivity_residual() <= 1e-10);
                prop_assert!(min_eigenvalue(s.v_bar()) >= lambda - 1e-9);
                prop_assert!(min_eigenvalue(s.w_bar()) >= lambda - 1e-9);
                prop_assert!(min_eigenvalue(s.z()) >= -1e-9);
                prop_assert!(s.missing_top_eigenvalue() <= s.pending() as f64 + 1e-9);
                prop_assert!(inverse_identity_residual(&s).unwrap() <= 1e-8);
            }
            let pending = history.iter().filter(|(_, a)| !a).count();
            prop_assert_eq!(s.pending(), pending);
            let (v, w, z) = rebuild(d, lambda, &history);
            prop_assert!((s.v_bar() - v).norm() <= 1e-10);
            prop_assert!((s.w_bar() - w).norm() <= 1e-10);
            prop_assert!((s.z() - z).norm() <= 1e-10);
        }

        #[test]
        fn total_norm_shrinks(
            probe in prop::collection::vec(-1.0f64..1.0, 4),
            raw in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..40),
        ) {
            let x = DVector::from_vec(probe);
            let mut s = DesignState::new(4, 1.0).unwrap();
            let mut last = weighted_norm(&s.v_bar_inverse().unwrap(), &x).unwrap();
            for r in raw {
                s.record_action(&unit_ball_vec(r)).unwrap();
                let now = weighted_norm(&s.v_bar_inverse().unwrap(), &x).unwrap();
                prop_assert!(now <= last + 1e-12);
                last = now;
            }
        }
    }
}
