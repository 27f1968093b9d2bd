use ndarray::Array1;

use super::dense::softmax;
use crate::error::{Error, Result};
use crate::real::Real;

const P_FLOOR: f64 = 1e-12;

/// `-ln p[target]`, with `p[target]` floored at 1e-12.
pub fn cross_entropy<T: Real>(p: &[T], target: usize) -> Result<T> {
    if target >= p.len() {
        return Err(Error::param(format!("target class {target} out of range for {} classes", p.len())));
    }
    let sum = p.iter().fold(T::zero(), |a, &v| a + v);
    if (sum - T::one()).abs() > T::lit(1e-5) {
        return Err(Error::param(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(-p[target].max(T::lit(P_FLOOR)).ln())
}

/// Softmax followed by cross-entropy. Returns `(loss, probabilities, dL/dlogits)`.
pub fn softmax_cross_entropy<T: Real>(logits: &Array1<T>, target: usize) -> (T, Array1<T>, Array1<T>) {
    let p = softmax(logits);
    let loss = -p[target].max(T::lit(P_FLOOR)).ln();
    let mut grad = p.clone();
    grad[target] -= T::one();
    (loss, p, grad)
}

/// `lambda * sum |w|` over every weight tensor.
pub fn l1_penalty<T: Real>(weights: &[&[T]], lambda: T) -> T {
    if lambda == T::zero() {
        return T::zero();
    }
    lambda * weights.iter().flat_map(|w| w.iter()).fold(T::zero(), |a, &v| a + v.abs())
}

/// Adds the L1 subgradient `lambda * sign(w)` (zero at `w == 0`) to `grad`.
pub fn l1_subgradient<T: Real>(weights: &[T], lambda: T, grad: &mut [T]) {
    if lambda == T::zero() {
        return;
    }
    for (g, &w) in grad.iter_mut().zip(weights) {
        if w > T::zero() {
            *g += lambda;
        } else if w < T::zero() {
            *g -= lambda;
        }
    }
}
