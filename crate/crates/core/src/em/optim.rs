use serde::{Deserialize, Serialize};

use super::q2::{q2_gradient, MonteCarloLabels};
use crate::error::{Error, Result};
use crate::meanfield::{FieldKernels, FieldWeights, MessageKernel};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates carried between steps.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    step: u32,
    m: [f64; 3],
    v: [f64; 3],
}

impl AdamW {
    /// One update in place: decay first, then the bias-corrected moment step.
    pub fn step(&self, state: &mut AdamState, w: &mut [f64; 3], grad: &[f64; 3]) {
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for k in 0..3 {
            w[k] *= 1.0 - self.lr * self.weight_decay;
            state.m[k] = self.beta1 * state.m[k] + (1.0 - self.beta1) * grad[k];
            state.v[k] = self.beta2 * state.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let m_hat = state.m[k] / c1;
            let v_hat = state.v[k] / c2;
            w[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Keeps the kernel weights attractive.
pub fn project(w: &mut [f64; 3]) {
    w[1] = w[1].max(0.0);
    w[2] = w[2].max(0.0);
}

/// `epochs` AdamW steps on the Monte Carlo prior loss, projecting after each.
pub fn optimize_w<K: MessageKernel>(
    init: FieldWeights,
    labels: &MonteCarloLabels,
    kernels: &FieldKernels<K>,
    r: usize,
    epochs: usize,
    optimizer: &AdamW,
) -> Result<FieldWeights> {
    if epochs == 0 {
        return Err(Error::invalid("optimizer needs at least one epoch"));
    }
    let mut state = AdamState::default();
    let mut w = init.to_array();
    for step in 0..epochs {
        let current = FieldWeights::from_array(w);
        let grad = q2_gradient(&current, labels, kernels, r)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        optimizer.step(&mut state, &mut w, &grad);
        project(&mut w);
    }
    Ok(FieldWeights::from_array(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_gradient_is_pure_decay() {
        let opt = AdamW::default();
        let mut state = AdamState::default();
        let mut w = [2.0, 1.0, -3.0];
        for _ in 0..3 {
            opt.step(&mut state, &mut w, &[0.0; 3]);
        }
        let f = (1.0 - 1e-4 * 0.01f64).powi(3);
        assert_relative_eq!(w[0], 2.0 * f, epsilon = 1e-15);
        assert_relative_eq!(w[2], -3.0 * f, epsilon = 1e-15);
    }

    #[test]
    fn first_step_closed_form() {
        let opt = AdamW {
            lr: 0.1,
            weight_decay: 0.0,
            ..AdamW::default()
        };
        let mut state = AdamState::default();
        let mut w = [1.0, 1.0, 1.0];
        opt.step(&mut state, &mut w, &[1.0, 0.0, 0.0]);
        assert_relative_eq!(w[0], 0.9, epsilon = 1e-7);
        assert_eq!(w[1], 1.0);
    }

    #[test]
    fn projection_clamps_kernel_weights_only() {
        let mut w = [-1.0, -0.5, 0.2];
        project(&mut w);
        assert_eq!(w, [-1.0, 0.0, 0.2]);
    }
}
