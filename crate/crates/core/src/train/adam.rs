use ndarray::{ArrayD, Zip};

use crate::model::{Module, Param};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam with bias-corrected moment estimates, one moment pair per trainable
/// tensor in module visit order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Zeroed moments shaped like the trainable tensors of `module`.
    pub fn for_module(config: AdamConfig, module: &dyn Module) -> Self {
        let mut adam = Self::new(config);
        module.visit(&mut |_, p| {
            if p.trainable {
                adam.m.push(ArrayD::zeros(p.value.raw_dim()));
                adam.v.push(ArrayD::zeros(p.value.raw_dim()));
            }
        });
        adam
    }

    /// Applies one update from the gradients currently stored in `module`.
    pub fn update(&mut self, module: &mut dyn Module) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let mut idx = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        module.visit_mut(&mut |_, p: &mut Param| {
            if !p.trainable {
                return;
            }
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            idx += 1;
            Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        });
    }

    /// Moment tensors are shape-congruent with the module's parameters.
    pub fn matches(&self, module: &dyn Module) -> bool {
        let mut idx = 0;
        let mut ok = true;
        module.visit(&mut |_, p| {
            if p.trainable {
                ok &= self.m.get(idx).is_some_and(|m| m.shape() == p.value.shape())
                    && self.v.get(idx).is_some_and(|v| v.shape() == p.value.shape());
                idx += 1;
            }
        });
        ok && idx == self.m.len() && idx == self.v.len()
    }
}
