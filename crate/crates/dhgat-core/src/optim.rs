//! Adam with decoupled weight decay.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mathx;
use crate::tape::ParamSet;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Self {
        let m = params
            .ids()
            .map(|id| {
                let (r, c) = params.value(id).shape();
                Matrix::zeros(r, c)
            })
            .collect::<Vec<_>>();
        let v = m.clone();
        Adam { cfg, step: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// One update. Weight decay is applied directly to the weights
    /// (`theta <- theta * (1 - lr * wd)`), not mixed into the gradient, so it
    /// acts even where the gradient is zero. Gradients are zeroed afterward.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Train {
                epoch: self.step as usize,
                message: alloc::format!(
                    "optimizer tracks {} parameters but {} are registered",
                    self.m.len(),
                    params.len()
                ),
            });
        }
        if !params.grads_ready() {
            return Err(Error::Train {
                epoch: self.step as usize,
                message: alloc::string::String::from(
                    "gradients not populated: backward() has not run since the last step",
                ),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c = self.cfg;
        let bc1 = 1.0 - mathx::powf(c.beta1, f64::from(t));
        let bc2 = 1.0 - mathx::powf(c.beta2, f64::from(t));
        for (idx, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let grad = params.grad(id).clone();
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let theta = params.value_mut(id);
            for i in 0..grad.len() {
                let g = grad.as_slice()[i];
                let ms = &mut m.as_mut_slice()[i];
                *ms = c.beta1 * *ms + (1.0 - c.beta1) * g;
                let vs = &mut v.as_mut_slice()[i];
                *vs = c.beta2 * *vs + (1.0 - c.beta2) * g * g;
                let mhat = *ms / bc1;
                let vhat = *vs / bc2;
                let w = &mut theta.as_mut_slice()[i];
                *w -= c.lr * c.weight_decay * *w;
                *w -= c.lr * mhat / (mathx::sqrt(vhat) + c.eps);
            }
        }
        params.zero_grads();
        Ok(())
    }
}
