use ndarray::{Array1, Array2};

use super::{ParamKind, ParamMut};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Per-channel batch normalization over `(batch, time)`.
///
/// Four stored values per channel: `gamma`, `beta` and the running mean and
/// variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
    pub eps: T,
    pub momentum: T,
    pub mode: BnMode,
}

/// Values saved by a training-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    xhat: Vec<Array2<T>>,
    inv_std: Array1<T>,
}

impl<T: Real> BatchNorm1d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            eps: T::lit(1e-5),
            momentum: T::lit(0.1),
            mode: BnMode::Train,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn n_params(&self) -> usize {
        4 * self.channels()
    }

    fn check(&self, batch: &[Array2<T>]) -> Result<usize> {
        let len = batch.first().map_or(0, |x| x.ncols());
        for x in batch {
            if x.dim() != (self.channels(), len) {
                return Err(Error::shape(format!(
                    "batch norm expects {} x {len} inputs, got {:?}",
                    self.channels(),
                    x.dim()
                )));
            }
        }
        Ok(len)
    }

    /// Normalizes with batch statistics and updates the running estimates.
    pub fn forward_train(&mut self, batch: &[Array2<T>]) -> Result<(Vec<Array2<T>>, BnCache<T>)> {
        let len = self.check(batch)?;
        let m = batch.len() * len;
        if m < 2 {
            return Err(Error::shape(format!("training-mode batch norm needs >= 2 values per channel, got {m}")));
        }
        let mf = T::from_usize(m).unwrap();
        let ch = self.channels();
        let mut mean = Array1::zeros(ch);
        let mut var = Array1::zeros(ch);
        for c in 0..ch {
            let mut s = T::zero();
            for x in batch {
                for &v in x.row(c) {
                    s += v;
                }
            }
            let mu = s / mf;
            let mut ss = T::zero();
            for x in batch {
                for &v in x.row(c) {
                    ss += (v - mu) * (v - mu);
                }
            }
            mean[c] = mu;
            var[c] = ss / mf;
        }
        let inv_std = var.mapv(|v: T| T::one() / (v + self.eps).sqrt());
        let xhat: Vec<Array2<T>> = batch
            .iter()
            .map(|x| Array2::from_shape_fn(x.dim(), |(c, t)| (x[[c, t]] - mean[c]) * inv_std[c]))
            .collect();
        let out = xhat
            .iter()
            .map(|xh| Array2::from_shape_fn(xh.dim(), |(c, t)| self.gamma[c] * xh[[c, t]] + self.beta[c]))
            .collect();

        let unbias = mf / (mf - T::one());
        let mom = self.momentum;
        for c in 0..ch {
            self.running_mean[c] = (T::one() - mom) * self.running_mean[c] + mom * mean[c];
            self.running_var[c] = (T::one() - mom) * self.running_var[c] + mom * var[c] * unbias;
        }
        Ok((out, BnCache { xhat, inv_std }))
    }

    /// Normalizes one sample with the running statistics.
    pub fn forward_eval(&self, x: &Array2<T>) -> Result<Array2<T>> {
        self.check(std::slice::from_ref(x))?;
        Ok(Array2::from_shape_fn(x.dim(), |(c, t)| {
            let inv = T::one() / (self.running_var[c] + self.eps).sqrt();
            self.gamma[c] * (x[[c, t]] - self.running_mean[c]) * inv + self.beta[c]
        }))
    }

    /// Dispatches on [`BnMode`]. Eval mode returns no cache.
    pub fn forward(&mut self, batch: &[Array2<T>]) -> Result<(Vec<Array2<T>>, Option<BnCache<T>>)> {
        match self.mode {
            BnMode::Train => self.forward_train(batch).map(|(y, c)| (y, Some(c))),
            BnMode::Eval => Ok((batch.iter().map(|x| self.forward_eval(x)).collect::<Result<_>>()?, None)),
        }
    }

    /// Backward through a training-mode forward pass:
    /// `(grad_input, grad_gamma, grad_beta)`.
    pub fn backward(
        &self,
        cache: &BnCache<T>,
        grad_out: &[Array2<T>],
    ) -> Result<(Vec<Array2<T>>, Array1<T>, Array1<T>)> {
        if grad_out.len() != cache.xhat.len() || grad_out.iter().zip(&cache.xhat).any(|(g, x)| g.dim() != x.dim()) {
            return Err(Error::shape("batch norm grad_out does not match the cached batch"));
        }
        let ch = self.channels();
        let m = T::from_usize(grad_out.len() * grad_out.first().map_or(0, |g| g.ncols())).unwrap();
        let mut dgamma = Array1::zeros(ch);
        let mut dbeta = Array1::zeros(ch);
        for (g, xh) in grad_out.iter().zip(&cache.xhat) {
            for c in 0..ch {
                for (gv, xv) in g.row(c).iter().zip(xh.row(c)) {
                    dbeta[c] += *gv;
                    dgamma[c] += *gv * *xv;
                }
            }
        }
        // dxhat = g * gamma, so the two channel sums follow from dbeta/dgamma.
        let grads = grad_out
            .iter()
            .zip(&cache.xhat)
            .map(|(g, xh)| {
                Array2::from_shape_fn(g.dim(), |(c, t)| {
                    let k = self.gamma[c] * cache.inv_std[c] / m;
                    k * (m * g[[c, t]] - dbeta[c] - xh[[c, t]] * dgamma[c])
                })
            })
            .collect();
        Ok((grads, dgamma, dbeta))
    }

    pub fn params_mut(&mut self, prefix: &str) -> Vec<ParamMut<'_, T>> {
        vec![
            ParamMut::new(format!("{prefix}.gamma"), ParamKind::Affine, self.gamma.as_slice_mut().unwrap()),
            ParamMut::new(format!("{prefix}.beta"), ParamKind::Affine, self.beta.as_slice_mut().unwrap()),
        ]
    }
}
