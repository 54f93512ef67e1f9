//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidParameter("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter("Adam eps must be positive".into()));
        }
        Ok(())
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// One Adam update. Entries with `mask[i] == false` keep their value and moments.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, config: &AdamConfig, mask: Option<&[bool]>) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for i in 0..params.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let g = grads[i];
        let m = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        let v = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        params[i] -= config.learning_rate * (m / c1) / ((v / c2).sqrt() + config.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut s = AdamState::new(3);
        let cfg = AdamConfig::default();
        for _ in 0..5 {
            adam_step(&mut p, &[0.0; 3], &mut s, &cfg, None);
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = vec![0.0; 4];
        let mut s = AdamState::new(4);
        let cfg = AdamConfig { learning_rate: 0.01, ..Default::default() };
        adam_step(&mut p, &[3.0, -0.2, 1e-3, -50.0], &mut s, &cfg, None);
        for (v, sign) in p.iter().zip([-1.0, 1.0, -1.0, 1.0]) {
            assert!((v - sign * 0.01).abs() < 1e-7, "{v}");
        }
    }

    #[test]
    fn matches_reference_recurrence() {
        // scalar Adam written out directly
        let cfg = AdamConfig { learning_rate: 0.05, beta1: 0.8, beta2: 0.95, eps: 1e-6 };
        let grads = [0.3, -1.2, 0.7, 0.0, 2.0];
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        for (k, g) in grads.iter().enumerate() {
            m = 0.8 * m + 0.2 * g;
            v = 0.95 * v + 0.05 * g * g;
            let mh = m / (1.0 - 0.8f64.powi(k as i32 + 1));
            let vh = v / (1.0 - 0.95f64.powi(k as i32 + 1));
            x -= 0.05 * mh / (vh.sqrt() + 1e-6);
            adam_step(&mut p, &[*g], &mut s, &cfg, None);
            assert!((p[0] - x).abs() < 1e-15);
        }
    }

    #[test]
    fn mask_freezes_entries() {
        let mut p = vec![1.0, 2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[1.0, 1.0], &mut s, &AdamConfig::default(), Some(&[true, false]));
        assert_eq!(p[1], 2.0);
        assert_eq!(s.m[1], 0.0);
        assert!(p[0] < 1.0);
    }
}
