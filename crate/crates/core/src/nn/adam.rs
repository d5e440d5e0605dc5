//! Adam with bias correction.

use super::LstmParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment accumulators, aligned with the flat parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update in place:
/// m ← β₁m + (1-β₁)g, v ← β₂v + (1-β₂)g², θ ← θ - lr·m̂/(√v̂ + ε).
pub fn adam_step(
    params: &mut LstmParams,
    grads: &LstmParams,
    state: &mut AdamState,
    config: &AdamConfig,
) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    let g = grads.to_flat();
    debug_assert_eq!(g.len(), state.m.len());
    let mut idx = 0;
    params.for_each_mut(|p| {
        let gi = g[idx];
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        *m = config.beta1 * *m + (1.0 - config.beta1) * gi;
        *v = config.beta2 * *v + (1.0 - config.beta2) * gi * gi;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        idx += 1;
    });
}
