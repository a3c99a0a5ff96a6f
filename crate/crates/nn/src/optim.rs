//! AdamW with decoupled weight decay, a cosine schedule with linear warm-up,
//! and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::params::ParamStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default = "default_clip")]
    pub grad_clip_norm: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub steps: usize,
    /// Defaults to 1% of `steps`, rounded up.
    #[serde(default)]
    pub warmup_steps: Option<usize>,
    pub seed: u64,
}

fn default_clip() -> f64 {
    1.0
}
fn default_weight_decay() -> f64 {
    0.1
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimConfig {
    pub fn new(learning_rate: f64, batch_size: usize, steps: usize, seed: u64) -> Self {
        OptimConfig {
            learning_rate,
            batch_size,
            grad_clip_norm: default_clip(),
            weight_decay: default_weight_decay(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            steps,
            warmup_steps: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.batch_size > 0
            && self.grad_clip_norm > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::Config(format!("invalid optimizer settings {self:?}")))
        }
    }

    pub fn warmup(&self) -> usize {
        self.warmup_steps.unwrap_or_else(|| self.steps.div_ceil(100))
    }

    /// Learning rate at 0-based `step`: linear ramp to the peak over the
    /// warm-up, then half a cosine down to zero at `steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let warm = self.warmup();
        let peak = self.learning_rate;
        if step < warm {
            return peak * (step + 1) as f64 / warm as f64;
        }
        let span = self.steps.saturating_sub(warm).max(1);
        let progress = ((step - warm) as f64 / span as f64).min(1.0);
        0.5 * peak * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Clone, Debug)]
pub struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        AdamW { m: zeros.clone(), v: zeros, t: 0 }
    }

    /// One update with learning rate `lr`; `grads` are in store order.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Vec<f64>], lr: f64, cfg: &OptimConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((x, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
                let update = (*mi / bc1) / ((*vi / bc2).sqrt() + cfg.eps);
                *x -= lr * (update + cfg.weight_decay * *x);
            }
        }
    }
}
