//! AdamW with decoupled weight decay and averaged gradient accumulation.
//!
//! ```text
//! w  <- w - lr * wd * w            (weights only, not biases)
//! m  <- b1 * m + (1 - b1) * g
//! v  <- b2 * v + (1 - b2) * g^2
//! w  <- w - lr * m_hat / (sqrt(v_hat) + eps)
//! ```
//!
//! Frozen layers are skipped entirely: no decay, no moment updates.

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::denoiser::{DenoiserParams, Gradients};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamW {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    /// One optimizer step with an already-averaged gradient.
    pub fn step(&self, params: &mut DenoiserParams, grad: &Gradients, state: &mut AdamState) {
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let decay = 1.0 - lr * self.weight_decay;
        for (((layer, g), m), v) in params
            .layers
            .iter_mut()
            .zip(&grad.layers)
            .zip(&mut state.m.layers)
            .zip(&mut state.v.layers)
        {
            if layer.frozen {
                continue;
            }
            let update = |w: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            };
            layer.weight.mapv_inplace(|w| w * decay);
            Zip::from(&mut layer.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(update);
        }
    }
}

/// First/second moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Gradients,
    pub v: Gradients,
}

impl AdamState {
    pub fn new(params: &DenoiserParams) -> Self {
        Self {
            step: 0,
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
        }
    }
}

/// Averages micro-batch gradients before a single optimizer step.
#[derive(Debug, Clone)]
pub struct GradAccumulator {
    sum: Gradients,
    count: usize,
}

impl GradAccumulator {
    pub fn new(params: &DenoiserParams) -> Self {
        Self {
            sum: Gradients::zeros_like(params),
            count: 0,
        }
    }

    pub fn add(&mut self, grad: &Gradients) {
        self.sum.add_assign(grad);
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(mut self) -> Gradients {
        if self.count > 1 {
            self.sum.scale(1.0 / self.count as f64);
        }
        self.sum
    }
}

/// Averages the accumulated micro-batch gradients and applies one AdamW step.
pub fn apply_update(
    params: &mut DenoiserParams,
    accumulated: GradAccumulator,
    state: &mut AdamState,
    optimizer: &AdamW,
) {
    let grad = accumulated.mean();
    optimizer.step(params, &grad, state);
}
