use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::SpikingNetwork;
use super::soft_lif::SoftLifConfig;
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::neural::{softmax_cross_entropy, AdamConfig, AdamState};
use crate::real::Real;
use ndarray::Array1;

/// Concatenated ON/OFF vectors of every step plus the target.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSample {
    pub steps: Vec<Vec<bool>>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Average the loss over every step instead of using the last one only.
    pub per_step_loss: bool,
    /// Stop after this many epochs without a better validation accuracy.
    pub patience: Option<usize>,
    pub soft: Option<SoftLifConfig>,
}

impl Default for SnnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            per_step_loss: false,
            patience: None,
            soft: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SnnTrainReport<T> {
    pub network: SpikingNetwork<T>,
    pub history: Vec<EpochStats>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

struct Grads<T> {
    w1: Vec<T>,
    b1: Vec<T>,
    w2: Vec<T>,
    b2: Vec<T>,
}

impl<T: Real> Grads<T> {
    fn zeros(net: &SpikingNetwork<T>) -> Self {
        Self {
            w1: vec![T::zero(); net.hidden.weights.len()],
            b1: vec![T::zero(); net.hidden.bias.len()],
            w2: vec![T::zero(); net.output.weights.len()],
            b2: vec![T::zero(); net.output.bias.len()],
        }
    }

    fn scale(&mut self, s: T) {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            v.iter_mut().for_each(|g| *g *= s);
        }
    }
}

/// Soft-LIF forward and backward for one step, accumulating `weight * dL`
/// into `grads`. Returns the loss and the class predicted by the rates.
fn accumulate_step<T: Real>(
    net: &SpikingNetwork<T>,
    soft: &SoftLifConfig,
    events: &[bool],
    label: Label,
    weight: T,
    grads: &mut Grads<T>,
) -> Result<T> {
    let lif1 = &net.hidden.lif;
    let lif2 = &net.output.lif;
    let z1 = net.hidden.forward_events(events)?;
    let (a1, da1): (Vec<T>, Vec<T>) = z1.iter().map(|&z| soft.activation(z, lif1)).unzip();
    let z2 = net.output.forward_dense(&a1)?;
    let (a2, da2): (Vec<T>, Vec<T>) = z2.iter().map(|&z| soft.activation(z, lif2)).unzip();
    let (loss, _, grad_a2) = softmax_cross_entropy(&Array1::from(a2), label.index());
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite spiking-layer loss {loss}")));
    }

    let n_hidden = a1.len();
    let mut grad_a1 = vec![T::zero(); n_hidden];
    for o in 0..2 {
        let dz = weight * grad_a2[o] * da2[o];
        grads.b2[o] += dz;
        for h in 0..n_hidden {
            grads.w2[o * n_hidden + h] += dz * a1[h];
            grad_a1[h] += net.output.weights[[o, h]] * dz;
        }
    }
    let n_in = events.len();
    for h in 0..n_hidden {
        let dz = grad_a1[h] * da1[h];
        grads.b1[h] += dz;
        for (k, &e) in events.iter().enumerate() {
            if e {
                grads.w1[h * n_in + k] += dz;
            }
        }
    }
    Ok(loss * weight)
}

/// Fraction of samples whose spiking-inference decision matches the label.
pub fn spiking_accuracy<T: Real>(net: &SpikingNetwork<T>, samples: &[EventSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::param("accuracy of an empty sample set"));
    }
    let mut correct = 0usize;
    for s in samples {
        if net.run(&s.steps)?.class == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Trains both spiking layers with soft-LIF rate units in place of the
/// spiking neurons, then keeps the weights unchanged for spiking inference.
///
/// With a validation set, the weights of the epoch with the best validation
/// accuracy are returned (earliest on ties); otherwise the final weights.
pub fn train_snn<T: Real>(
    mut net: SpikingNetwork<T>,
    train: &[EventSample],
    val: Option<&[EventSample]>,
    cfg: &SnnTrainConfig,
) -> Result<SnnTrainReport<T>> {
    if train.is_empty() {
        return Err(Error::param("spiking training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::param("batch size must be positive"));
    }
    if let Some(s) = train.iter().chain(val.unwrap_or(&[])).find(|s| s.steps.is_empty()) {
        return Err(Error::Data(format!("event sample labelled {} has no steps", s.label)));
    }
    let soft = cfg.soft.unwrap_or_else(|| SoftLifConfig::for_lif(&net.hidden.lif));
    soft.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::<T>::new(cfg.adam);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, SpikingNetwork<T>)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Grads::zeros(&net);
            for &i in batch {
                let s = &train[i];
                let steps: &[Vec<bool>] =
                    if cfg.per_step_loss { &s.steps } else { std::slice::from_ref(s.steps.last().unwrap()) };
                let w = T::one() / T::lit(steps.len() as f64);
                for events in steps {
                    epoch_loss += accumulate_step(&net, &soft, events, s.label, w, &mut grads)?.as_f64();
                }
            }
            grads.scale(T::one() / T::lit(batch.len() as f64));
            let mut params = net.hidden.params_mut("snn.hidden");
            params.extend(net.output.params_mut("snn.output"));
            adam.step(&mut params, &[&grads.w1, &grads.b1, &grads.w2, &grads.b2])?;
        }

        let train_accuracy = spiking_accuracy(&net, train)?;
        let val_accuracy = val.map(|v| spiking_accuracy(&net, v)).transpose()?;
        history.push(EpochStats { epoch, loss: epoch_loss / train.len() as f64, train_accuracy, val_accuracy });

        if let Some(acc) = val_accuracy {
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, net.clone()));
            }
            let best_epoch = best.as_ref().unwrap().1;
            if cfg.patience.is_some_and(|p| epoch - best_epoch >= p) {
                break;
            }
        }
    }

    let (network, best_epoch) = match best {
        Some((_, e, n)) => (n, e),
        None => (net, history.len().saturating_sub(1)),
    };
    Ok(SnnTrainReport { network, history, best_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::LifParams;
    use rand::Rng;

    /// Class F lights random ON inputs only, class M random OFF inputs only.
    fn separable(n: usize, channels: usize, seed: u64) -> Vec<EventSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = Label::from_index(i % 2);
                let mut events = vec![false; 2 * channels];
                let offset = if label == Label::F { 0 } else { channels };
                for c in 0..channels {
                    events[offset + c] = rng.random_bool(0.5);
                }
                events[offset + rng.random_range(0..channels)] = true;
                EventSample { steps: vec![vec![false; 2 * channels], events], label }
            })
            .collect()
    }

    fn fresh(seed: u64) -> SpikingNetwork<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpikingNetwork::init(16, 16, LifParams::default(), &mut rng)
    }

    #[test]
    fn learns_separable_events() {
        let data = separable(200, 8, 1);
        let report = train_snn(fresh(2), &data, None, &SnnTrainConfig { epochs: 100, ..Default::default() }).unwrap();
        let acc = spiking_accuracy(&report.network, &data).unwrap();
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn silent_inputs_carry_no_information() {
        let data: Vec<EventSample> = (0..40)
            .map(|i| EventSample { steps: vec![vec![false; 16]], label: Label::from_index(i % 2) })
            .collect();
        let report = train_snn(fresh(0), &data, None, &SnnTrainConfig { epochs: 20, ..Default::default() }).unwrap();
        for e in &report.history {
            assert!((e.loss - 2f64.ln()).abs() < 0.01, "loss {}", e.loss);
            assert_eq!(e.train_accuracy, 0.5);
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let data = separable(64, 8, 4);
        let cfg = SnnTrainConfig { epochs: 5, seed: 7, ..Default::default() };
        let a = train_snn(fresh(3), &data, Some(&data[..16]), &cfg).unwrap();
        let b = train_snn(fresh(3), &data, Some(&data[..16]), &cfg).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let lif = LifParams::default();
        let mut net = SpikingNetwork::<f64>::init(6, 5, lif, &mut rng);
        net.hidden.bias.mapv_inplace(|_| rng.random_range(1.1..2.0));
        net.output.bias.mapv_inplace(|_| rng.random_range(1.1..2.0));
        let soft = SoftLifConfig::for_lif(&lif);
        let events = vec![true, false, true, true, false, true];
        let loss = |n: &SpikingNetwork<f64>| {
            let mut g = Grads::zeros(n);
            accumulate_step(n, &soft, &events, Label::M, 1.0, &mut g).unwrap()
        };
        let mut g = Grads::zeros(&net);
        accumulate_step(&net, &soft, &events, Label::M, 1.0, &mut g).unwrap();

        use crate::neural::gradcheck::{rel_err, step};
        for (idx, which) in [(0usize, 0u8), (2, 0), (7, 0), (1, 1), (3, 2), (8, 2), (0, 3), (1, 3)] {
            let mut plus = net.clone();
            let mut minus = net.clone();
            let (p, m, analytic) = match which {
                0 => (&mut plus.hidden.weights.as_slice_mut().unwrap()[idx], &mut minus.hidden.weights.as_slice_mut().unwrap()[idx], g.w1[idx]),
                1 => (&mut plus.hidden.bias[idx], &mut minus.hidden.bias[idx], g.b1[idx]),
                2 => (&mut plus.output.weights.as_slice_mut().unwrap()[idx], &mut minus.output.weights.as_slice_mut().unwrap()[idx], g.w2[idx]),
                _ => (&mut plus.output.bias[idx], &mut minus.output.bias[idx], g.b2[idx]),
            };
            let h = step(*p);
            *p += h;
            *m -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!(rel_err(analytic, numeric) <= 1e-5, "{which}/{idx}: {analytic} vs {numeric}");
        }
    }
}
