//! Adam with decoupled weight decay and linear learning-rate warmup.

use std::collections::BTreeMap;

use super::checkpoint::ParamStore;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Steps over which the learning rate ramps linearly from 0 to `lr`;
    /// 0 disables warmup.
    pub warmup_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            warmup_steps: 0,
        }
    }
}

pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Effective learning rate at step `t` (1-based).
    pub fn lr_at(&self, t: u64) -> f64 {
        if self.cfg.warmup_steps == 0 {
            self.cfg.lr
        } else {
            self.cfg.lr * (t as f64 / self.cfg.warmup_steps as f64).min(1.0)
        }
    }

    /// Apply one update. `grads` maps parameter names to flat gradients;
    /// parameters without a gradient entry are left untouched (weight
    /// decay included, matching the decoupled-decay convention of only
    /// updating what was part of the step).
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Vec<f64>>) {
        self.step += 1;
        let t = self.step;
        let lr = self.lr_at(t);
        let bc1 = 1.0 - self.cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(t as i32);

        for (name, grad) in grads {
            let param = store
                .get_mut(name)
                .unwrap_or_else(|| panic!("unknown parameter {name}"));
            assert_eq!(param.len(), grad.len(), "gradient size for {name}");
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g;
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param[i] -=
                    lr * (m_hat / (v_hat.sqrt() + self.cfg.eps) + self.cfg.weight_decay * param[i]);
            }
        }
    }
}
