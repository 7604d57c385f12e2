use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: each step first shrinks θ by `lr · weight_decay · θ`.
    pub weight_decay: f64,
    pub amsgrad: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, amsgrad: false }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Invalid(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.weight_decay < 0.0 || self.eps <= 0.0 {
            return Err(Error::Invalid("weight decay must be >= 0 and eps > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    v_max: Vec<f64>,
}

/// Adam / AMSGrad with bias correction and decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    state: Vec<Moments>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, state: Vec::new(), t: 0 })
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update at the configured learning rate.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        let lr = self.cfg.lr;
        self.step_with_lr(params, grads, lr)
    }

    /// One update with a scheduled learning rate overriding `cfg.lr`.
    pub fn step_with_lr(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(shape_err("adam", format!("{} params vs {} grads", params.len(), grads.len())));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(shape_err("adam", format!("param {:?} vs grad {:?}", p.shape(), g.shape())));
            }
        }
        if self.state.is_empty() {
            self.state = params
                .iter()
                .map(|p| Moments { m: vec![0.0; p.numel()], v: vec![0.0; p.numel()], v_max: vec![0.0; p.numel()] })
                .collect();
        } else if self.state.len() != params.len() {
            return Err(shape_err("adam", "parameter list changed between steps"));
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps, weight_decay, amsgrad, .. } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), st) in params.iter_mut().zip(grads).zip(&mut self.state) {
            for (i, (theta, gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                if weight_decay > 0.0 {
                    *theta -= lr * weight_decay * *theta;
                }
                st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * gi;
                st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * gi * gi;
                let second = if amsgrad {
                    st.v_max[i] = st.v_max[i].max(st.v[i]);
                    st.v_max[i]
                } else {
                    st.v[i]
                };
                let m_hat = st.m[i] / bc1;
                let v_hat = second / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Cosine annealing from `lr_max` at `t = 0` down to `lr_min` at `t = total`.
pub fn cosine_lr(t: usize, total: usize, lr_max: f64, lr_min: f64) -> Result<f64> {
    if total == 0 || t > total {
        return Err(Error::Invalid(format!("cosine schedule step {t} outside [0, {total}]")));
    }
    let frac = t as f64 / total as f64;
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos()))
}
