use ndarray::{Array1, Array2, Array3, ArrayView2};
use rand::Rng;

use super::{xavier_uniform, ParamKind, ParamMut};
use crate::error::{Error, Result};
use crate::real::Real;

/// 1-D cross-correlation over time, no padding and no activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    /// `out_ch x in_ch x kernel`
    pub weights: Array3<T>,
    pub bias: Array1<T>,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub weights: Array3<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Conv1d<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        assert!(kernel > 0 && stride > 0, "kernel and stride must be positive");
        Self { weights: Array3::zeros((out_ch, in_ch, kernel)), bias: Array1::zeros(out_ch), stride }
    }

    pub fn init(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let mut layer = Self::zeros(in_ch, out_ch, kernel, stride);
        let w = xavier_uniform(rng, out_ch * in_ch * kernel, in_ch * kernel, out_ch * kernel);
        layer.weights = Array3::from_shape_vec((out_ch, in_ch, kernel), w).expect("shape");
        layer
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dim().1
    }

    pub fn kernel(&self) -> usize {
        self.weights.dim().2
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Number of output positions for an input of `t` samples.
    pub fn output_len(&self, t: usize) -> Result<usize> {
        if t < self.kernel() {
            return Err(Error::shape(format!("input of {t} samples is shorter than kernel {}", self.kernel())));
        }
        Ok((t - self.kernel()) / self.stride + 1)
    }

    fn check_input(&self, x: &ArrayView2<'_, T>) -> Result<usize> {
        if x.nrows() != self.in_channels() {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels(),
                x.nrows()
            )));
        }
        self.output_len(x.ncols())
    }

    /// `y[o, l] = sum_c sum_j w[o, c, j] * x[c, l*stride + j] + b[o]`, summed
    /// with `j` innermost, then `c`, then the bias added.
    pub fn forward(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let len = self.check_input(&x)?;
        let x = x.as_standard_layout();
        let k = self.kernel();
        let (out_ch, in_ch) = (self.out_channels(), self.in_channels());
        // Weights as `(in_ch * k) x out_ch`.
        let wt = self.weights.view().into_shape_with_order((out_ch, in_ch * k)).expect("standard layout").reversed_axes();
        let wt = wt.as_standard_layout();
        let wt = wt.as_slice().expect("standard layout");
        let mut y = Array2::zeros((out_ch, len));
        let mut acc = vec![T::zero(); out_ch];
        for l in 0..len {
            let start = l * self.stride;
            acc.iter_mut().for_each(|a| *a = T::zero());
            for c in 0..in_ch {
                let xs = &x.row(c).to_slice().expect("contiguous row")[start..start + k];
                for (j, &xv) in xs.iter().enumerate() {
                    let tap = &wt[(c * k + j) * out_ch..(c * k + j + 1) * out_ch];
                    for (a, &w) in acc.iter_mut().zip(tap) {
                        *a += w * xv;
                    }
                }
            }
            for o in 0..out_ch {
                y[[o, l]] = acc[o] + self.bias[o];
            }
        }
        Ok(y)
    }

    /// Gradients with respect to the weights and bias.
    pub fn param_grads(&self, x: ArrayView2<'_, T>, grad_out: ArrayView2<'_, T>) -> Result<ConvGrads<T>> {
        let len = self.check_input(&x)?;
        if grad_out.dim() != (self.out_channels(), len) {
            return Err(Error::shape(format!(
                "conv grad_out {:?}, expected {:?}",
                grad_out.dim(),
                (self.out_channels(), len)
            )));
        }
        let x = x.as_standard_layout();
        let k = self.kernel();
        let (out_ch, in_ch) = (self.out_channels(), self.in_channels());
        let mut gw = Array3::zeros((out_ch, in_ch, k));
        let mut gb = Array1::zeros(out_ch);
        let gws = gw.as_slice_mut().expect("standard layout");
        for o in 0..out_ch {
            for l in 0..len {
                let g = grad_out[[o, l]];
                gb[o] += g;
                if g == T::zero() {
                    continue;
                }
                let start = l * self.stride;
                for c in 0..in_ch {
                    let xs = &x.row(c).to_slice().expect("contiguous row")[start..start + k];
                    let dst = &mut gws[(o * in_ch + c) * k..(o * in_ch + c + 1) * k];
                    for (d, xv) in dst.iter_mut().zip(xs) {
                        *d += g * *xv;
                    }
                }
            }
        }
        Ok(ConvGrads { weights: gw, bias: gb })
    }

    /// Full backward pass: `(grad_input, grad_weights, grad_bias)`.
    pub fn backward(
        &self,
        x: ArrayView2<'_, T>,
        grad_out: ArrayView2<'_, T>,
    ) -> Result<(Array2<T>, Array3<T>, Array1<T>)> {
        let grads = self.param_grads(x, grad_out)?;
        let len = grad_out.ncols();
        let k = self.kernel();
        let mut gx = Array2::zeros(x.dim());
        for o in 0..self.out_channels() {
            for l in 0..len {
                let g = grad_out[[o, l]];
                for c in 0..self.in_channels() {
                    for j in 0..k {
                        gx[[c, l * self.stride + j]] += g * self.weights[[o, c, j]];
                    }
                }
            }
        }
        Ok((gx, grads.weights, grads.bias))
    }

    pub fn params_mut(&mut self, prefix: &str) -> Vec<ParamMut<'_, T>> {
        vec![
            ParamMut::new(format!("{prefix}.weight"), ParamKind::Weight, self.weights.as_slice_mut().unwrap()),
            ParamMut::new(format!("{prefix}.bias"), ParamKind::Bias, self.bias.as_slice_mut().unwrap()),
        ]
    }
}

impl<T: Real> ConvGrads<T> {
    pub fn flat(&self) -> Vec<&[T]> {
        vec![self.weights.as_slice().unwrap(), self.bias.as_slice().unwrap()]
    }
}

/// Per-channel mean over all positions.
pub fn avgpool_global<T: Real>(x: ArrayView2<'_, T>) -> Result<Array1<T>> {
    let len = x.ncols();
    if len == 0 {
        return Err(Error::shape("global average pool over zero positions"));
    }
    let n = T::from_usize(len).unwrap();
    Ok(x.rows().into_iter().map(|r| r.iter().fold(T::zero(), |a, &v| a + v) / n).collect())
}

/// Spreads a pooled gradient evenly back over `len` positions.
pub fn avgpool_global_backward<T: Real>(grad: &Array1<T>, len: usize) -> Array2<T> {
    let n = T::from_usize(len).unwrap();
    Array2::from_shape_fn((grad.len(), len), |(c, _)| grad[c] / n)
}

#[cfg(test)]
mod tests {
    use super::super::gradcheck::{rel_err, step};
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Brute-force oracle with the documented summation order.
    fn oracle(layer: &Conv1d<f64>, x: &Array2<f64>) -> Array2<f64> {
        let (o_n, c_n, k) = layer.weights.dim();
        let len = (x.ncols() - k) / layer.stride + 1;
        let mut y = Array2::zeros((o_n, len));
        for o in 0..o_n {
            for l in 0..len {
                let mut acc = 0.0;
                for c in 0..c_n {
                    for j in 0..k {
                        acc += layer.weights[[o, c, j]] * x[[c, l * layer.stride + j]];
                    }
                }
                y[[o, l]] = acc + layer.bias[o];
            }
        }
        y
    }

    #[test]
    fn output_length_and_constant_bias() {
        let mut layer = Conv1d::<f32>::zeros(10, 3, 64, 64);
        assert_eq!(layer.output_len(256).unwrap(), 4);
        assert!(layer.output_len(63).is_err());
        layer.bias.fill(0.25);
        let y = layer.forward(Array2::from_elem((10, 256), 3.0).view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.25));
        assert!(layer.forward(Array2::zeros((9, 256)).view()).is_err());
    }

    #[test]
    fn impulse_kernel_samples_the_input() {
        let mut layer = Conv1d::<f64>::zeros(1, 1, 64, 64);
        layer.weights[[0, 0, 0]] = 1.0;
        let ramp = Array2::from_shape_fn((1, 256), |(_, t)| t as f64);
        let y = layer.forward(ramp.view()).unwrap();
        assert_eq!(y, array![[0.0, 64.0, 128.0, 192.0]]);
    }

    #[test]
    fn forward_matches_oracle_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (stride, out_ch) in [(1, 4), (3, 8), (64, 19), (64, 40)] {
            let mut layer = Conv1d::<f64>::init(5, out_ch, 64, stride, &mut rng);
            layer.bias = Array1::from_shape_fn(out_ch, |_| rng.random_range(-1.0..1.0));
            let x = Array2::from_shape_fn((5, 300), |_| rng.random_range(-2.0..2.0));
            let y = layer.forward(x.view()).unwrap();
            let o = oracle(&layer, &x);
            assert!(y.iter().zip(o.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn bias_grad_sums_and_zero_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Conv1d::<f64>::init(2, 2, 3, 2, &mut rng);
        let x = Array2::from_shape_fn((2, 8), |_| rng.random_range(-1.0..1.0));
        let g = Array2::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0));
        let (_, _, gb) = layer.backward(x.view(), g.view()).unwrap();
        for o in 0..2 {
            assert_eq!(gb[o], g.row(o).sum());
        }
        let (gx, gw, gb) = layer.backward(x.view(), Array2::zeros((2, 3)).view()).unwrap();
        assert!(gx.iter().chain(gw.iter()).chain(gb.iter()).all(|&v| v == 0.0));
        assert!(layer.backward(x.view(), Array2::zeros((2, 4)).view()).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = Conv1d::<f64>::init(2, 2, 3, 2, &mut rng);
        layer.bias = Array1::from_shape_fn(2, |_| rng.random_range(-1.0..1.0));
        let x = Array2::from_shape_fn((2, 8), |_| rng.random_range(-1.0..1.0));
        let c = Array2::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0));
        let loss = |l: &Conv1d<f64>, x: &Array2<f64>| (l.forward(x.view()).unwrap() * &c).sum();
        let (gx, gw, gb) = layer.backward(x.view(), c.view()).unwrap();

        for i in 0..gw.len() {
            let idx = (i / 6, (i / 3) % 2, i % 3);
            let h = step(layer.weights[idx]);
            let (mut p, mut m) = (layer.clone(), layer.clone());
            p.weights[idx] += h;
            m.weights[idx] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!(rel_err(gw[idx], fd) <= 1e-4, "w{idx:?}: {} vs {fd}", gw[idx]);
        }
        for o in 0..2 {
            let h = step(layer.bias[o]);
            let (mut p, mut m) = (layer.clone(), layer.clone());
            p.bias[o] += h;
            m.bias[o] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!(rel_err(gb[o], fd) <= 1e-4);
        }
        for idx in [(0, 0), (1, 7), (0, 3), (1, 4)] {
            let h = step(x[idx]);
            let (mut p, mut m) = (x.clone(), x.clone());
            p[idx] += h;
            m[idx] -= h;
            let fd = (loss(&layer, &p) - loss(&layer, &m)) / (2.0 * h);
            assert!(rel_err(gx[idx], fd) <= 1e-4, "x{idx:?}");
        }
    }

    #[test]
    fn global_pool() {
        let x = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert_eq!(avgpool_global(x.view()).unwrap(), array![2.0, 5.0]);
        assert_eq!(avgpool_global(array![[7.5], [-1.0]].view()).unwrap(), array![7.5, -1.0]);
        assert_eq!(avgpool_global(Array2::from_elem((1, 9), 0.625f64).view()).unwrap()[0], 0.625);
        assert!(avgpool_global(Array2::<f64>::zeros((2, 0)).view()).is_err());
        let g = avgpool_global_backward(&array![3.0, 6.0], 3);
        assert_eq!(g, array![[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]);
    }
}
