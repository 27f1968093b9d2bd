use rand::Rng;

use super::layer::SpikingDense;
use super::lif::LifParams;
use crate::adm::{concat_on_off, EventFrame};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::real::Real;

/// Two spiking layers: events -> hidden -> two output neurons (F, M).
#[derive(Debug, Clone, PartialEq)]
pub struct SpikingNetwork<T> {
    pub hidden: SpikingDense<T>,
    pub output: SpikingDense<T>,
}

/// What happened at one step of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace<T> {
    pub step: usize,
    pub hidden_spikes: Vec<bool>,
    pub output_spikes: Vec<bool>,
    /// Pre-reset output voltages.
    pub voltages: Vec<T>,
    pub class: Label,
    /// Weight-column accumulations performed in this step.
    pub synaptic_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutput<T> {
    pub steps: Vec<StepTrace<T>>,
    pub class: Label,
}

impl<T> SequenceOutput<T> {
    pub fn synaptic_events(&self) -> usize {
        self.steps.iter().map(|s| s.synaptic_events).sum()
    }
}

impl<T: Real> SpikingNetwork<T> {
    pub fn init(inputs: usize, hidden: usize, lif: LifParams, rng: &mut impl Rng) -> Self {
        Self {
            hidden: SpikingDense::init(inputs, hidden, lif, rng),
            output: SpikingDense::init(hidden, 2, lif, rng),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize, lif: LifParams) -> Self {
        Self { hidden: SpikingDense::zeros(inputs, hidden, lif), output: SpikingDense::zeros(hidden, 2, lif) }
    }

    pub fn inputs(&self) -> usize {
        self.hidden.inputs()
    }

    pub fn n_params(&self) -> usize {
        self.hidden.n_params() + self.output.n_params()
    }

    /// Runs a fresh copy of the network over concatenated ON/OFF vectors.
    pub fn run(&self, inputs: &[Vec<bool>]) -> Result<SequenceOutput<T>> {
        if inputs.is_empty() {
            return Err(Error::param("spiking forward pass needs at least one frame"));
        }
        let mut net = self.clone();
        net.hidden.reset_state();
        net.output.reset_state();
        let mut steps = Vec::with_capacity(inputs.len());
        for (step, events) in inputs.iter().enumerate() {
            let h = net.hidden.step(events)?;
            let o = net.output.step(&h.spikes)?;
            let active_in = events.iter().filter(|&&e| e).count();
            let active_hidden = h.spikes.iter().filter(|&&e| e).count();
            steps.push(StepTrace {
                step,
                class: classify_step(&o.spikes, &o.candidate),
                synaptic_events: active_in * net.hidden.outputs() + active_hidden * net.output.outputs(),
                hidden_spikes: h.spikes,
                output_spikes: o.spikes,
                voltages: o.candidate,
            });
        }
        let class = steps.last().expect("non-empty").class;
        Ok(SequenceOutput { steps, class })
    }
}

/// A lone spiking output neuron decides; otherwise the higher voltage wins,
/// with ties going to F.
pub fn classify_step<T: Real>(spikes: &[bool], voltages: &[T]) -> Label {
    match (spikes[0], spikes[1]) {
        (true, false) => Label::F,
        (false, true) => Label::M,
        _ if voltages[1] > voltages[0] => Label::M,
        _ => Label::F,
    }
}

/// Resets the network state and runs it over `frames`. The decision is the
/// classification at the last step.
pub fn snn_forward_sequence<T: Real>(net: &SpikingNetwork<T>, frames: &[EventFrame]) -> Result<SequenceOutput<T>> {
    let inputs: Vec<Vec<bool>> = frames.iter().map(concat_on_off).collect();
    net.run(&inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decision_rule() {
        assert_eq!(classify_step(&[true, false], &[0.1, 0.9]), Label::F);
        assert_eq!(classify_step(&[false, true], &[0.9, 0.1]), Label::M);
        assert_eq!(classify_step(&[false, false], &[0.3, 0.6]), Label::M);
        assert_eq!(classify_step(&[true, true], &[1.4, 1.2]), Label::F);
        assert_eq!(classify_step(&[false, false], &[0.5, 0.5]), Label::F);
    }

    #[test]
    fn zero_model_is_silent_and_says_f() {
        let net = SpikingNetwork::<f32>::zeros(6, 4, LifParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<EventFrame> = (0..5)
            .map(|t| EventFrame { on: (0..3).map(|_| rng.random_bool(0.5)).collect(), off: vec![false; 3], step: t })
            .collect();
        let out = snn_forward_sequence(&net, &frames).unwrap();
        assert_eq!(out.steps.len(), 5);
        for s in &out.steps {
            assert_eq!(s.class, Label::F);
            assert!(s.output_spikes.iter().all(|&x| !x));
            assert_eq!(s.voltages[0], s.voltages[1]);
        }
        assert_eq!(out.class, Label::F);
        assert!(snn_forward_sequence(&net, &[]).is_err());
    }

    #[test]
    fn causal_and_stateless_between_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lif = LifParams::default().with_dt(0.004);
        let mut net = SpikingNetwork::<f64>::init(8, 6, lif, &mut rng);
        net.hidden.weights.mapv_inplace(|w| w * 4.0);
        let inputs: Vec<Vec<bool>> = (0..12).map(|_| (0..8).map(|_| rng.random_bool(0.4)).collect()).collect();
        let full = net.run(&inputs).unwrap();
        for k in 1..inputs.len() {
            let part = net.run(&inputs[..k]).unwrap();
            assert_eq!(part.steps[..], full.steps[..k]);
        }
        assert_eq!(net.run(&inputs).unwrap(), full);
        assert!(full.steps.iter().any(|s| s.hidden_spikes.iter().any(|&x| x)));
    }

    #[test]
    fn synaptic_event_count() {
        let mut net = SpikingNetwork::<f32>::zeros(4, 3, LifParams::default());
        net.hidden.bias.fill(2.0);
        let out = net.run(&[vec![true, false, true, false]]).unwrap();
        // two input events fan out to 3 hidden units, three hidden spikes to 2 outputs
        assert_eq!(out.synaptic_events(), 2 * 3 + 3 * 2);
    }
}
