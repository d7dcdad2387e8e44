use serde::{Deserialize, Serialize};

use crate::tensor::Real;

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam<R> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<R>,
    second: Vec<R>,
}

impl<R: Real> Adam<R> {
    pub fn new(len: usize) -> Self {
        Self::with_betas(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { beta1, beta2, eps, step: 0, first: vec![R::zero(); len], second: vec![R::zero(); len] }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn step(&mut self, params: &mut [R], grads: &[R], lr: f64) {
        assert_eq!(params.len(), self.first.len(), "parameter count changed under Adam");
        assert_eq!(grads.len(), params.len(), "gradient/parameter length mismatch");
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (R::lit(self.beta1), R::lit(self.beta2));
        let (c1, c2) = (R::one() - b1, R::one() - b2);
        // fold both bias corrections into the step size
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let step_size = R::lit(lr * bc2.sqrt() / bc1);
        let eps_hat = R::lit(self.eps * bc2.sqrt());
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            *m = b1 * *m + c1 * g;
            *v = b2 * *v + c2 * g * g;
            *p -= step_size * *m / (v.sqrt() + eps_hat);
        }
    }
}
