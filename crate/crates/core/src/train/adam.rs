use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected first/second moment estimates for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Self {
        Adam {
            cfg,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One update of `params` in place along `-grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let t = self.t as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g;
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g * g;
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Functional form: returns updated weights and optimizer state.
pub fn adam_update(weights: &[f64], grads: &[f64], state: &Adam) -> (Vec<f64>, Adam) {
    let mut w = weights.to_vec();
    let mut s = state.clone();
    s.step(&mut w, grads);
    (w, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_weights_and_decays_moments() {
        let mut adam = Adam::new(AdamConfig::default(), 3);
        let mut w = vec![1.0, -2.0, 0.5];
        adam.step(&mut w, &[0.1, 0.2, -0.3]);
        let before = w.clone();
        let (m0, v0) = (adam.m.clone(), adam.v.clone());
        // Moments are nonzero, so a zero gradient still moves the weights;
        // with fresh moments it must not.
        let mut fresh = Adam::new(AdamConfig::default(), 3);
        let mut w2 = before.clone();
        fresh.step(&mut w2, &[0.0; 3]);
        assert_eq!(w2, before);
        adam.step(&mut w, &[0.0; 3]);
        for k in 0..3 {
            assert_eq!(adam.m[k], 0.9 * m0[k]);
            assert_eq!(adam.v[k], 0.999 * v0[k]);
        }
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, 1);
        let mut w = vec![0.0];
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = w[0];
            adam.step(&mut w, &[3.7]);
            last = before - w[0];
        }
        // m_hat / sqrt(v_hat) -> g / |g| = 1.
        approx::assert_relative_eq!(last, 0.01, max_relative = 1e-6);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut adam = Adam::new(AdamConfig::default(), 2);
            let mut w = vec![0.3, 0.4];
            for k in 0..100 {
                let g = [(k as f64).sin(), (k as f64 * 0.3).cos()];
                adam.step(&mut w, &g);
            }
            w
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn functional_form_matches_in_place() {
        let state = Adam::new(AdamConfig::default(), 2);
        let (w, s) = adam_update(&[1.0, 2.0], &[0.5, -0.5], &state);
        let mut w2 = vec![1.0, 2.0];
        let mut s2 = state.clone();
        s2.step(&mut w2, &[0.5, -0.5]);
        assert_eq!(w, w2);
        assert_eq!(s, s2);
    }
}
