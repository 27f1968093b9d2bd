use ndarray::{Array1, Array2};
use rand::Rng;

use super::lif::{lif_step, LifLayerState, LifParams, LifStep};
use crate::error::{Error, Result};
use crate::neural::{xavier_uniform, ParamKind, ParamMut};
use crate::real::Real;

/// Fully connected layer of LIF neurons driven by binary events.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikingDense<T> {
    /// `out x in`
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub lif: LifParams,
    pub state: LifLayerState<T>,
}

impl<T: Real> SpikingDense<T> {
    pub fn zeros(inputs: usize, outputs: usize, lif: LifParams) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
            lif,
            state: LifLayerState::new(outputs, &lif),
        }
    }

    /// Xavier-uniform weights; biases start at the firing threshold so every
    /// unit begins inside the region where the soft-LIF curve has slope.
    pub fn init(inputs: usize, outputs: usize, lif: LifParams, rng: &mut impl Rng) -> Self {
        let w = xavier_uniform(rng, inputs * outputs, inputs, outputs);
        Self {
            weights: Array2::from_shape_vec((outputs, inputs), w).expect("shape"),
            bias: Array1::from_elem(outputs, T::lit(lif.v_threshold)),
            lif,
            state: LifLayerState::new(outputs, &lif),
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

    /// Input current `W e + b`, touching only the columns of active inputs.
    pub fn forward_events(&self, events: &[bool]) -> Result<Vec<T>> {
        if events.len() != self.inputs() {
            return Err(Error::shape(format!("spiking layer expects {} inputs, got {}", self.inputs(), events.len())));
        }
        let active: Vec<usize> = events.iter().enumerate().filter_map(|(k, &e)| e.then_some(k)).collect();
        Ok((0..self.outputs())
            .map(|o| {
                let row = self.weights.row(o);
                let mut acc = T::zero();
                for &k in &active {
                    acc += row[k];
                }
                acc + self.bias[o]
            })
            .collect())
    }

    /// `W x + b` for real-valued inputs, same summation order as the event path.
    pub fn forward_dense(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.inputs() {
            return Err(Error::shape(format!("spiking layer expects {} inputs, got {}", self.inputs(), x.len())));
        }
        Ok((0..self.outputs())
            .map(|o| {
                let mut acc = T::zero();
                for (w, v) in self.weights.row(o).iter().zip(x) {
                    acc += *w * *v;
                }
                acc + self.bias[o]
            })
            .collect())
    }

    pub fn reset_state(&mut self) {
        self.state.reset(&self.lif);
    }

    /// Accumulates the events into currents and advances the neurons one step.
    pub fn step(&mut self, events: &[bool]) -> Result<LifStep<T>> {
        let j = self.forward_events(events)?;
        lif_step(&mut self.state, &j, &self.lif)
    }

    pub fn params_mut(&mut self, prefix: &str) -> Vec<ParamMut<'_, T>> {
        vec![
            ParamMut::new(format!("{prefix}.weight"), ParamKind::Weight, self.weights.as_slice_mut().unwrap()),
            ParamMut::new(format!("{prefix}.bias"), ParamKind::Bias, self.bias.as_slice_mut().unwrap()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_layer(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> SpikingDense<f32> {
        let mut l = SpikingDense::init(inputs, outputs, LifParams::default(), rng);
        l.bias.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        l
    }

    fn dense_oracle(l: &SpikingDense<f32>, events: &[bool]) -> Vec<f32> {
        (0..l.outputs())
            .map(|o| {
                let mut acc = 0.0f32;
                for k in 0..l.inputs() {
                    acc += l.weights[[o, k]] * if events[k] { 1.0 } else { 0.0 };
                }
                acc + l.bias[o]
            })
            .collect()
    }

    #[test]
    fn zero_and_single_events() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = random_layer(&mut rng, 6, 8);
        assert_eq!(l.forward_events(&[false; 6]).unwrap(), l.bias.to_vec());
        let mut e = [false; 6];
        e[4] = true;
        let j = l.forward_events(&e).unwrap();
        for o in 0..8 {
            assert_eq!(j[o], l.weights[[o, 4]] + l.bias[o]);
        }
        assert!(l.forward_events(&[true; 5]).is_err());
    }

    #[test]
    fn event_path_is_bit_identical_to_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let l = random_layer(&mut rng, 6, 8);
            let events: Vec<bool> = (0..6).map(|_| rng.random_bool(0.5)).collect();
            let got = l.forward_events(&events).unwrap();
            let want = dense_oracle(&l, &events);
            assert!(got.iter().zip(&want).all(|(a, b)| a.to_bits() == b.to_bits()));
            let as_real: Vec<f32> = events.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect();
            assert_eq!(l.forward_dense(&as_real).unwrap(), got);
        }
    }

    #[test]
    fn init_biases_at_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = SpikingDense::<f64>::init(80, 80, LifParams::default(), &mut rng);
        assert!(l.bias.iter().all(|&b| b == 1.0));
        assert_eq!(l.n_params(), 6480);
    }
}
