use crate::error::{shape, Result};
use crate::prelude::*;

use super::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam. Moment buffers are bound to parameters by position,
/// so `step` must always see the parameters in the same order.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self, index: usize) -> Option<(&[T], &[T])> {
        Some((self.m.get(index)?.as_slice(), self.v.get(index)?.as_slice()))
    }

    /// Applies one update using each parameter's accumulated gradient.
    /// Parameters without a gradient buffer are skipped.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(shape(format!("adam tracks {} parameters, got {}", self.m.len(), params.len())));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (ob1, ob2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
        let step = T::lit(lr / c1);
        let inv_sqrt_c2 = T::lit(1.0 / c2.sqrt());
        let eps = T::lit(eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if m.len() != p.numel() {
                return Err(shape("adam parameter size changed between steps"));
            }
            let (value, grad) = p.value_and_grad_mut();
            let Some(grad) = grad else { continue };
            for (((x, &g), mi), vi) in value.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + ob1 * g;
                *vi = b2 * *vi + ob2 * g * g;
                *x -= step * *mi / (vi.sqrt() * inv_sqrt_c2 + eps);
            }
        }
        Ok(())
    }
}
