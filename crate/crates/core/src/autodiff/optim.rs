use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use super::Tensor;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamW {
    pub fn new(store: &ParameterStore, weight_decay: f64) -> Self {
        let zeros = || store.ids().map(|id| {
            let t = store.value(id);
            Tensor::zeros(t.rows, t.cols)
        }).collect::<Vec<_>>();
        AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, m: zeros(), v: zeros(), step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients accumulated in `store`.
    pub fn step(&mut self, store: &mut ParameterStore, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let g = store.grad(id).data.clone();
            let m = &mut self.m[id.0].data;
            let v = &mut self.v[id.0].data;
            let p = &mut store.value_mut(id).data;
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * (mh / (vh.sqrt() + self.eps) + self.weight_decay * p[i]);
            }
        }
    }
}

/// Linear warmup to `peak` over the first `warmup_frac` of the schedule, then
/// linear decay to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub peak: f64,
    pub total_steps: u64,
    pub warmup_frac: f64,
}

impl LinearSchedule {
    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_frac * self.total_steps as f64).ceil() as u64
    }

    pub fn lr(&self, step: u64) -> f64 {
        let warm = self.warmup_steps();
        if step < warm {
            return self.peak * step as f64 / warm as f64;
        }
        let rest = self.total_steps.saturating_sub(warm).max(1);
        let left = self.total_steps.saturating_sub(step);
        self.peak * left as f64 / rest as f64
    }
}

/// Rescales accumulated gradients so their global norm is at most `max_norm`.
pub fn clip_grad_norm(store: &mut ParameterStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm {
        store.scale_grads(max_norm / norm);
    }
    norm
}
