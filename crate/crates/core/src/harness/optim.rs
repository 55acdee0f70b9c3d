use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::Tensor;

use crate::config::TrainConfig;
use crate::error::Result;
use crate::nn::ParamStore;

/// Adam with L2 weight decay added to the gradient, bias-corrected moments
/// and an independent step count per parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub state: BTreeMap<String, AdamSlot>,
}

#[derive(Debug, Clone)]
pub struct AdamSlot {
    pub m: Tensor,
    pub v: Tensor,
    pub steps: u64,
}

impl Adam {
    pub fn new(cfg: &TrainConfig) -> Self {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            state: BTreeMap::new(),
        }
    }

    /// Updates every parameter that received a gradient.
    pub fn step(&mut self, params: &ParamStore, grads: &GradStore) -> Result<()> {
        for (name, var) in params.vars() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let theta = var.as_tensor().detach();
            let g = g.detach();
            let g = if self.weight_decay != 0.0 {
                (g + theta.affine(self.weight_decay, 0.0)?)?
            } else {
                g
            };
            let slot = match self.state.get_mut(name) {
                Some(s) => s,
                None => self.state.entry(name.clone()).or_insert(AdamSlot {
                    m: g.zeros_like()?,
                    v: g.zeros_like()?,
                    steps: 0,
                }),
            };
            slot.steps += 1;
            slot.m = ((&slot.m * self.beta1)? + (&g * (1.0 - self.beta1))?)?;
            slot.v = ((&slot.v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let t = slot.steps as i32;
            let m_hat = (&slot.m / (1.0 - self.beta1.powi(t)))?;
            let v_hat = (&slot.v / (1.0 - self.beta2.powi(t)))?;
            let update = (m_hat / (v_hat.sqrt()? + self.eps)?)?;
            var.set(&(theta - (update * self.lr)?)?)?;
        }
        Ok(())
    }
}
