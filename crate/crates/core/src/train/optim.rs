//! AdamW with decoupled weight decay, and a cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moment estimates for one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One AdamW update at step `t` (1-based) with learning rate `lr`.
pub fn adamw_step(params: &mut [f64], grads: &[f64], moments: &mut Moments, hp: &AdamWParams, lr: f64, t: usize) {
    adamw_step_masked(params, grads, moments, hp, lr, t, None);
}

/// [`adamw_step`] that leaves parameters with `skip[i] == true` (and their
/// moments) untouched.
pub fn adamw_step_masked(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut Moments,
    hp: &AdamWParams,
    lr: f64,
    t: usize,
    skip: Option<&[bool]>,
) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
    assert_eq!(params.len(), moments.len(), "parameter/moment length mismatch");
    assert!(t >= 1, "optimizer steps are 1-based");
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);
    let decay = 1.0 - lr * hp.weight_decay;
    for i in 0..params.len() {
        if skip.is_some_and(|s| s[i]) {
            continue;
        }
        let g = grads[i];
        let m = &mut moments.m[i];
        let v = &mut moments.v[i];
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        if hp.weight_decay != 0.0 {
            params[i] *= decay;
        }
        params[i] -= lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

/// `base * (1 + cos(pi * (t - 1) / total)) / 2` for 1-based `t`; reaches
/// zero one step past the end.
pub fn cosine_lr(base: f64, t: usize, total: usize) -> f64 {
    let progress = (t.saturating_sub(1)) as f64 / total.max(1) as f64;
    0.5 * base * (1.0 + (std::f64::consts::PI * progress.min(1.0)).cos())
}
