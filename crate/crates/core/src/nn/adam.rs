use crate::error::{Error, Result};
use crate::nn::network::{Gradients, Network, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Adam moment accumulators for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    first: ParamSet,
    second: ParamSet,
    step: u64,
}

impl OptimizerState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        let zeros = Gradients::zeros_like(net).0;
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &ParamSet {
        &self.first
    }

    pub fn second_moment(&self) -> &ParamSet {
        &self.second
    }

    /// One bias-corrected Adam update of `net` along `grads`.
    ///
    /// Non-finite gradients are rejected before anything is modified.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if !grads.0.same_shape(net.params()) || !grads.0.same_shape(&self.first) {
            return Err(Error::Shape(
                "gradients, optimizer state and network differ in shape".into(),
            ));
        }
        if !grads.all_finite() {
            return Err(Error::Numeric("non-finite gradient rejected by Adam".into()));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let params = net.params_mut();
        for i in 0..params.num_tensors() {
            let g = grads.0.tensor(i);
            let m = self.first.tensor_mut(i);
            for (m, &g) in m.iter_mut().zip(g) {
                *m = beta1 * *m + (1.0 - beta1) * g;
            }
            let v = self.second.tensor_mut(i);
            for (v, &g) in v.iter_mut().zip(g) {
                *v = beta2 * *v + (1.0 - beta2) * g * g;
            }
            let m = self.first.tensor(i);
            let v = self.second.tensor(i);
            for ((p, &m), &v) in params.tensor_mut(i).iter_mut().zip(m).zip(v) {
                *p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            }
        }
        if !params.all_finite() {
            return Err(Error::Numeric("parameters became non-finite after Adam step".into()));
        }
        Ok(())
    }
}
