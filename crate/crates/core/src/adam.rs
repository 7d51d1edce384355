//! Adam with classic L2 weight decay.
//!
//! The decay term `weight_decay * theta` is added to the raw loss gradient
//! before the moment updates (L2 regularization, not decoupled decay).

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::TrainerConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdamError {
    #[error("non-finite gradient component at index {0}")]
    NonFiniteGradient(usize),
    #[error("dimension mismatch: state has {state}, params {params}, gradient {gradient}")]
    Dimension {
        state: usize,
        params: usize,
        gradient: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zero moments for `dim` parameters with the reference hyperparameters
    /// (`beta1 = 0.9`, `beta2 = 0.999`, `weight_decay = 0.01`, `epsilon = 1e-8`).
    pub fn new(dim: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.01,
            epsilon: 1e-8,
        }
    }

    pub fn from_trainer(dim: usize, cfg: &TrainerConfig) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            weight_decay: cfg.weight_decay,
            epsilon: cfg.epsilon,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// One dense update of every parameter.
    pub fn step(&mut self, params: &mut [f64], loss_grad: &[f64]) -> Result<(), AdamError> {
        self.check_dims(params.len(), loss_grad.len())?;
        if let Some(i) = loss_grad.iter().position(|g| !g.is_finite()) {
            return Err(AdamError::NonFiniteGradient(i));
        }
        let (c1, c2) = self.advance();
        for i in 0..params.len() {
            self.update(i, &mut params[i], loss_grad[i], c1, c2);
        }
        Ok(())
    }

    /// One update restricted to `active` coordinates.
    ///
    /// Equivalent to [`step`](Self::step) whenever every coordinate outside
    /// `active` has zero parameter, zero moments and zero loss gradient: such a
    /// coordinate would receive a zero update anyway.
    pub fn step_sparse(&mut self, params: &mut [f64], active: &[usize], loss_grad: &[f64]) -> Result<(), AdamError> {
        self.check_dims(params.len(), loss_grad.len())?;
        if let Some(&i) = active.iter().find(|&&i| !loss_grad[i].is_finite()) {
            return Err(AdamError::NonFiniteGradient(i));
        }
        let (c1, c2) = self.advance();
        for &i in active {
            self.update(i, &mut params[i], loss_grad[i], c1, c2);
        }
        Ok(())
    }

    fn check_dims(&self, params: usize, gradient: usize) -> Result<(), AdamError> {
        if params != self.dim() || gradient != self.dim() {
            return Err(AdamError::Dimension {
                state: self.dim(),
                params,
                gradient,
            });
        }
        Ok(())
    }

    /// Increments `t` and returns the bias-correction denominators.
    fn advance(&mut self) -> (f64, f64) {
        self.t += 1;
        let t = self.t as f64;
        (1.0 - libm::pow(self.beta1, t), 1.0 - libm::pow(self.beta2, t))
    }

    #[inline]
    fn update(&mut self, i: usize, theta: &mut f64, loss_grad: f64, c1: f64, c2: f64) {
        let g = loss_grad + self.weight_decay * *theta;
        self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
        self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
        let m_hat = self.m[i] / c1;
        let v_hat = self.v[i] / c2;
        *theta -= self.lr * m_hat / (libm::sqrt(v_hat) + self.epsilon);
    }
}

/// Functional form: returns the advanced state and parameters.
pub fn adam_step(state: &AdamState, params: &[f64], loss_grad: &[f64]) -> Result<(AdamState, Vec<f64>), AdamError> {
    let mut state = state.clone();
    let mut params = params.to_vec();
    state.step(&mut params, loss_grad)?;
    Ok((state, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_at_origin_is_a_no_op() {
        let s = AdamState::new(3, 1e-5);
        let (s2, p) = adam_step(&s, &[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(p, [0.0; 3]);
        assert_eq!(s2.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(1, 1e-5);
        s.weight_decay = 0.0;
        // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
        let (_, p) = adam_step(&s, &[1.0], &[1.0]).unwrap();
        let expected = 1.0 - 1e-5 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn descends_a_parabola() {
        // f(theta) = theta^2, theta_0 = 1, lr = 0.1
        let mut s = AdamState::new(1, 0.1);
        s.weight_decay = 0.0;
        let mut theta = [1.0];
        let mut prev = theta[0];
        for _ in 0..10 {
            let g = [2.0 * theta[0]];
            s.step(&mut theta, &g).unwrap();
            assert!(theta[0] < prev);
            assert!(theta[0].abs() < prev.abs());
            prev = theta[0];
        }
        assert_eq!(s.t, 10);
    }

    #[test]
    fn rejects_non_finite() {
        let mut s = AdamState::new(2, 0.1);
        let err = s.step(&mut [0.0, 0.0], &[0.0, f64::NAN]).unwrap_err();
        assert_eq!(err, AdamError::NonFiniteGradient(1));
        assert_eq!(s.t, 0);
        assert!(matches!(s.step(&mut [0.0], &[0.0]), Err(AdamError::Dimension { .. })));
    }

    #[test]
    fn decay_equals_explicit_l2_gradient() {
        let theta0 = [0.7, -1.3];
        let g = [0.2, 0.4];
        let mut with_decay = AdamState::new(2, 0.01);
        let mut explicit = AdamState::new(2, 0.01);
        explicit.weight_decay = 0.0;
        let mut a = theta0;
        let mut b = theta0;
        with_decay.step(&mut a, &g).unwrap();
        let g_full = [g[0] + 0.01 * theta0[0], g[1] + 0.01 * theta0[1]];
        explicit.step(&mut b, &g_full).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sparse_matches_dense_when_inactive_coordinates_are_zero() {
        let mut dense = AdamState::new(5, 0.05);
        let mut sparse = AdamState::new(5, 0.05);
        let mut a = [0.0; 5];
        let mut b = [0.0; 5];
        for step in 0..20 {
            let g = [0.0, 0.3 - step as f64 * 0.01, 0.0, -0.2, 0.0];
            dense.step(&mut a, &g).unwrap();
            sparse.step_sparse(&mut b, &[1, 3], &g).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(dense, sparse);
    }
}
