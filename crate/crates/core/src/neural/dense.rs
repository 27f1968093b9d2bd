use ndarray::{Array1, Array2};
use rand::Rng;

use super::{xavier_uniform, ParamKind, ParamMut};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Softmax,
}

/// Affine layer `y = act(W x + b)` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> DenseGrads<T> {
    pub fn flat(&self) -> Vec<&[T]> {
        vec![self.weights.as_slice().unwrap(), self.bias.as_slice().unwrap()]
    }
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { weights: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs), activation }
    }

    pub fn init(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let w = xavier_uniform(rng, inputs * outputs, inputs, outputs);
        Self {
            weights: Array2::from_shape_vec((outputs, inputs), w).expect("shape"),
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Pre-activation `W x + b`, summing inputs in ascending index order
    /// before adding the bias.
    pub fn linear(&self, x: &[T]) -> Result<Array1<T>> {
        if x.len() != self.inputs() {
            return Err(Error::shape(format!("dense layer expects {} inputs, got {}", self.inputs(), x.len())));
        }
        Ok(Array1::from_shape_fn(self.outputs(), |o| {
            let mut acc = T::zero();
            for (w, v) in self.weights.row(o).iter().zip(x) {
                acc += *w * *v;
            }
            acc + self.bias[o]
        }))
    }

    pub fn forward(&self, x: &[T]) -> Result<Array1<T>> {
        let z = self.linear(x)?;
        Ok(match self.activation {
            Activation::None => z,
            Activation::Relu => relu(&z),
            Activation::Softmax => softmax(&z),
        })
    }

    /// Backward through the affine part given `dL/dz`:
    /// `(grad_input, grads)`.
    pub fn backward_linear(&self, x: &[T], grad_z: &Array1<T>) -> Result<(Array1<T>, DenseGrads<T>)> {
        if x.len() != self.inputs() || grad_z.len() != self.outputs() {
            return Err(Error::shape(format!(
                "dense backward: input {} (expected {}), grad {} (expected {})",
                x.len(),
                self.inputs(),
                grad_z.len(),
                self.outputs()
            )));
        }
        let weights = Array2::from_shape_fn(self.weights.dim(), |(o, i)| grad_z[o] * x[i]);
        let grad_x = Array1::from_shape_fn(self.inputs(), |i| {
            let mut acc = T::zero();
            for o in 0..self.outputs() {
                acc += self.weights[[o, i]] * grad_z[o];
            }
            acc
        });
        Ok((grad_x, DenseGrads { weights, bias: grad_z.clone() }))
    }

    pub fn params_mut(&mut self, prefix: &str) -> Vec<ParamMut<'_, T>> {
        vec![
            ParamMut::new(format!("{prefix}.weight"), ParamKind::Weight, self.weights.as_slice_mut().unwrap()),
            ParamMut::new(format!("{prefix}.bias"), ParamKind::Bias, self.bias.as_slice_mut().unwrap()),
        ]
    }
}

pub fn relu<T: Real>(z: &Array1<T>) -> Array1<T> {
    z.mapv(|v| v.max(T::zero()))
}

/// Gates `grad` by `z > 0`.
pub fn relu_backward<T: Real>(z: &Array1<T>, grad: &Array1<T>) -> Array1<T> {
    Array1::from_shape_fn(z.len(), |i| if z[i] > T::zero() { grad[i] } else { T::zero() })
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(z: &Array1<T>) -> Array1<T> {
    let max = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let e = z.mapv(|v| (v - max).exp());
    let s = e.sum();
    e.mapv(|v| v / s)
}

#[cfg(test)]
mod tests {
    use super::super::gradcheck::{rel_err, step};
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn activations() {
        assert_eq!(softmax(&array![0.0f64, 0.0]), array![0.5, 0.5]);
        assert_eq!(relu(&array![-3.0f64, 2.0]), array![0.0, 2.0]);
        assert_eq!(relu_backward(&array![-1.0f64, 0.5], &array![4.0, 4.0]), array![0.0, 4.0]);
        let big = softmax(&array![1000.0f64, 0.0]);
        assert!(big.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shape_errors() {
        let d = Dense::<f64>::zeros(4, 3, Activation::None);
        assert!(d.linear(&[0.0; 3]).is_err());
        assert!(d.backward_linear(&[0.0; 4], &array![0.0, 0.0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = Dense::<f64>::init(4, 3, Activation::Relu, &mut rng);
        d.bias = array![0.1, -0.2, 0.3];
        let x = vec![0.5, -1.2, 0.8, 2.0];
        let c = array![0.7, -1.1, 0.4];
        let loss = |d: &Dense<f64>, x: &[f64]| (d.forward(x).unwrap() * &c).sum();

        let z = d.linear(&x).unwrap();
        let (gx, g) = d.backward_linear(&x, &relu_backward(&z, &c)).unwrap();
        for _ in 0..20 {
            let (o, i) = (rng.random_range(0..3), rng.random_range(0..4));
            let h = step(d.weights[[o, i]]);
            let (mut p, mut m) = (d.clone(), d.clone());
            p.weights[[o, i]] += h;
            m.weights[[o, i]] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!(rel_err(g.weights[[o, i]], fd) <= 1e-4);
        }
        for i in 0..4 {
            let h = step(x[i]);
            let (mut p, mut m) = (x.clone(), x.clone());
            p[i] += h;
            m[i] -= h;
            assert!(rel_err(gx[i], (loss(&d, &p) - loss(&d, &m)) / (2.0 * h)) <= 1e-4);
        }
        for o in 0..3 {
            let h = step(d.bias[o]);
            let (mut p, mut m) = (d.clone(), d.clone());
            p.bias[o] += h;
            m.bias[o] -= h;
            assert!(rel_err(g.bias[o], (loss(&p, &x) - loss(&m, &x)) / (2.0 * h)) <= 1e-4);
        }
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(v in prop::collection::vec(-50.0f64..50.0, 1..10)) {
            let p = softmax(&Array1::from_vec(v));
            prop_assert!((p.sum() - 1.0).abs() <= 1e-6);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }
    }
}
