use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Gradients, Matrix, Params};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub grad_clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        // Full-scale recipe: lr 3e-6 with 1k warmup steps over 100k + 100k steps.
        OptimizerConfig {
            base_lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 250,
            total_steps: 5000,
            grad_clip_norm: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("optimizer requires base_lr >= 0 and betas in [0, 1)".into()));
        }
        if !(self.eps > 0.0) || !(self.grad_clip_norm > 0.0) {
            return Err(Error::Config("optimizer eps and grad_clip_norm must be positive".into()));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config("warmup_steps cannot exceed total_steps".into()));
        }
        Ok(())
    }
}

/// Linear warmup to `base_lr`, then cosine decay reaching zero at `total_steps`.
pub fn lr_schedule(cfg: &OptimizerConfig, step: u64) -> f64 {
    let step = step.min(cfg.total_steps);
    if step < cfg.warmup_steps {
        return cfg.base_lr * step as f64 / cfg.warmup_steps as f64;
    }
    let span = cfg.total_steps - cfg.warmup_steps;
    if span == 0 {
        return cfg.base_lr;
    }
    let progress = (step - cfg.warmup_steps) as f64 / span as f64;
    cfg.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &Params) -> Self {
        let zeros = |p: &Params| p.values.iter().map(|m| Matrix::zeros(m.rows, m.cols)).collect();
        OptimizerState {
            config,
            step: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }
}

/// Clip the global gradient norm, then take one bias-corrected Adam step on
/// trainable parameters. Returns `(lr, pre-clip gradient norm)`; the norm
/// covers trainable parameters only.
pub fn adam_step(state: &mut OptimizerState, params: &mut Params, grads: &Gradients) -> (f64, f64) {
    let cfg = state.config.clone();
    let norm = params
        .trainable_ids()
        .map(|id| grads.values[id].sq_norm())
        .sum::<f64>()
        .sqrt();
    let clip = if norm > cfg.grad_clip_norm { cfg.grad_clip_norm / norm } else { 1.0 };
    state.step += 1;
    let t = state.step as i32;
    let lr = lr_schedule(&cfg, state.step);
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for id in 0..params.len() {
        if !params.specs[id].trainable {
            continue;
        }
        let (m, v) = (&mut state.m[id].data, &mut state.v[id].data);
        let g = &grads.values[id].data;
        for (k, p) in params.values[id].data.iter_mut().enumerate() {
            let gk = g[k] * clip;
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            let mhat = m[k] / bc1;
            let vhat = v[k] / bc2;
            *p -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    (lr, norm)
}
