//! Adam with decoupled multiplicative weight decay, over flat parameter
//! vectors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error)]
pub enum AdamError {
    #[error("non-finite gradient at flat index {0}")]
    NonFiniteGradient(usize),
    #[error("gradient length {got} does not match parameter length {want}")]
    LengthMismatch { got: usize, want: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(param_count: usize) -> Self {
        OptimizerState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One update: `p <- p·(1 − lr·wd) − lr·m̂/(√v̂ + eps)`.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<(), AdamError> {
    if grads.len() != params.len() {
        return Err(AdamError::LengthMismatch { got: grads.len(), want: params.len() });
    }
    if let Some(idx) = grads.iter().position(|g| !g.is_finite()) {
        return Err(AdamError::NonFiniteGradient(idx));
    }
    state.step += 1;
    let bias1 = 1.0 - state.beta1.powi(state.step as i32);
    let bias2 = 1.0 - state.beta2.powi(state.step as i32);
    let decay = 1.0 - lr * weight_decay;
    for i in 0..params.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params[i] = params[i] * decay - lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // f(w) = w² at w = 1: the bias-corrected ratio is sign(g), so the
        // first step is almost exactly lr.
        let mut w = vec![1.0];
        let mut state = OptimizerState::new(1);
        adam_step(&mut w, &[2.0], &mut state, 1e-3, 0.0).unwrap();
        assert!((w[0] - 0.999).abs() < 1e-9, "w = {}", w[0]);
    }

    #[test]
    fn zero_gradient_and_zero_decay_leave_parameters_unchanged() {
        let mut w = vec![0.5, -1.5];
        let mut state = OptimizerState::new(2);
        adam_step(&mut w, &[0.0, 0.0], &mut state, 1e-3, 0.0).unwrap();
        assert_eq!(w, vec![0.5, -1.5]);
    }

    #[test]
    fn weight_decay_shrinks_parameters_multiplicatively() {
        let mut w = vec![2.0];
        let mut state = OptimizerState::new(1);
        adam_step(&mut w, &[0.0], &mut state, 0.1, 0.5).unwrap();
        assert!((w[0] - 2.0 * (1.0 - 0.1 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn converges_on_a_convex_quadratic() {
        let mut w = vec![1.0];
        let mut state = OptimizerState::new(1);
        for _ in 0..200 {
            let g = 2.0 * w[0];
            adam_step(&mut w, &[g], &mut state, 0.05, 0.0).unwrap();
        }
        assert!(w[0].abs() < 1e-2, "w = {}", w[0]);
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut w = vec![1.0];
        let mut state = OptimizerState::new(1);
        let err = adam_step(&mut w, &[f64::NAN], &mut state, 1e-3, 0.0).unwrap_err();
        assert!(matches!(err, AdamError::NonFiniteGradient(0)));
    }
}
