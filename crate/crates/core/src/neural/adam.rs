use super::ParamMut;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// ADAM with bias correction. Moment buffers are allocated on the first step
/// and must keep the same parameter layout afterwards.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, first: Vec::new(), second: Vec::new(), step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Gradients are checked for finiteness before any
    /// parameter is touched.
    pub fn step(&mut self, params: &mut [ParamMut<'_, T>], grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!("{} parameters but {} gradients", params.len(), grads.len())));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.values.len() != g.len() {
                return Err(Error::shape(format!(
                    "gradient for {} has {} values, parameter has {}",
                    p.name,
                    g.len(),
                    p.values.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(format!("non-finite gradient for parameter {}", p.name)));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.values.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len() || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.values.len()) {
            return Err(Error::shape("parameter layout changed between optimizer steps"));
        }

        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        let t = self.step as i32;
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p.values[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
