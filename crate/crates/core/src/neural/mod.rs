//! Layers, losses and the optimizer for the two fixed architectures.
//!
//! Every layer has a hand-written backward pass; there is no autodiff graph.
//! All code is generic over [`Real`](crate::Real) so gradient checks can run
//! the exact same arithmetic in `f64`.

mod adam;
mod batchnorm;
mod conv;
mod dense;
mod loss;

pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{BatchNorm1d, BnCache, BnMode};
pub use conv::{avgpool_global, avgpool_global_backward, Conv1d, ConvGrads};
pub use dense::{relu, relu_backward, softmax, Activation, Dense, DenseGrads};
pub use loss::{cross_entropy, l1_penalty, l1_subgradient, softmax_cross_entropy};

use rand::Rng;

use crate::real::Real;

/// Role of a learnable tensor. Only `Weight` tensors carry the L1 penalty
/// and are quantized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    /// Batch-norm scale and shift.
    Affine,
}

/// Mutable view of one learnable tensor, flattened.
pub struct ParamMut<'a, T> {
    pub name: String,
    pub kind: ParamKind,
    pub values: &'a mut [T],
}

impl<'a, T> ParamMut<'a, T> {
    pub fn new(name: impl Into<String>, kind: ParamKind, values: &'a mut [T]) -> Self {
        Self { name: name.into(), kind, values }
    }
}

/// Uniform samples in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<T: Real>(rng: &mut impl Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect()
}
