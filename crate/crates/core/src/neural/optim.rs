use serde::{Deserialize, Serialize};

use super::model::{ModelParams, ParamKind};
use super::tensor::{Mat, Scalar};

/// Linear warmup to the base rate, then linear decay to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub base_lr: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl LinearSchedule {
    pub fn new(base_lr: f64, total_steps: usize, warmup_fraction: f64) -> Self {
        LinearSchedule {
            base_lr,
            total_steps,
            warmup_steps: (total_steps as f64 * warmup_fraction).round() as usize,
        }
    }

    /// Rate for 0-based step `step`.
    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let rest = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let done = step - self.warmup_steps;
        self.base_lr * (1.0 - done as f64 / rest as f64).max(0.0)
    }
}

/// Scales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [Mat<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.sum_sq().as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::from_f64_lossy(max_norm / norm);
        grads.iter_mut().for_each(|g| g.scale(s));
    }
    norm
}

/// Adam moments with decoupled weight decay. Biases, norms and the span
/// head are not decayed.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Mat<T>>,
    v: Vec<Mat<T>>,
    t: usize,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &ModelParams<T>, weight_decay: f64) -> Self {
        let zeros = || {
            params
                .tensors
                .iter()
                .map(|p| Mat::zeros(p.rows, p.cols))
                .collect()
        };
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &[Mat<T>], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2) = (T::from_f64_lossy(self.beta1), T::from_f64_lossy(self.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let step = T::from_f64_lossy(lr / bc1);
        let inv_bc2 = T::from_f64_lossy(1.0 / bc2);
        let eps = T::from_f64_lossy(self.eps);
        for (i, spec) in params.index.specs.iter().enumerate() {
            let decay = matches!(spec.kind, ParamKind::Weight | ParamKind::Embedding);
            let shrink = T::from_f64_lossy(if decay {
                1.0 - lr * self.weight_decay
            } else {
                1.0
            });
            let p = &mut params.tensors[i].data;
            let (m, v) = (&mut self.m[i].data, &mut self.v[i].data);
            for (((p, m), v), &g) in p
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut())
                .zip(&grads[i].data)
            {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let denom = (*v * inv_bc2).sqrt() + eps;
                *p = *p * shrink - step * *m / denom;
            }
        }
    }
}
