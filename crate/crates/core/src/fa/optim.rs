//! Adaptive-moment optimizer keeping the running maximum of second moments.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmsGrad {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub vmax: Vec<f64>,
}

impl AmsGrad {
    pub fn new(n: usize, lr: f64) -> Self {
        AmsGrad {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
            vmax: vec![0.0; n],
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = (1.0 - self.beta2.powi(t)).sqrt();
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            self.vmax[i] = self.vmax[i].max(self.v[i]);
            let denom = self.vmax[i].sqrt() / c2 + self.eps;
            params[i] -= self.lr * (self.m[i] / c1) / denom;
        }
    }
}
