use crate::error::{Error, Result};
use crate::real::Real;

/// Leaky integrate-and-fire constants. All times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    pub tau_rc: f64,
    pub v_threshold: f64,
    pub v_reset: f64,
    pub t_ref: f64,
    pub dt: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self { tau_rc: 0.020, v_threshold: 1.0, v_reset: 0.0, t_ref: 0.002, dt: 64.0 / 256.0 }
    }
}

impl LifParams {
    /// Default neuron with the step length of a conv stride at 256 Hz.
    pub fn for_stride(stride: usize) -> Self {
        Self { dt: stride as f64 / 256.0, ..Self::default() }
    }

    pub fn with_dt(self, dt: f64) -> Self {
        Self { dt, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_rc > 0.0 && self.tau_rc.is_finite()) {
            return Err(Error::param(format!("tau_rc must be positive, got {}", self.tau_rc)));
        }
        if !(self.t_ref >= 0.0 && self.t_ref.is_finite()) {
            return Err(Error::param(format!("t_ref must be non-negative, got {}", self.t_ref)));
        }
        if !(self.v_threshold > self.v_reset) {
            return Err(Error::param(format!(
                "v_threshold ({}) must exceed v_reset ({})",
                self.v_threshold, self.v_reset
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Membrane voltage and remaining refractory time (seconds) per neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct LifLayerState<T> {
    pub v: Vec<T>,
    pub refractory_remaining: Vec<T>,
}

impl<T: Real> LifLayerState<T> {
    pub fn new(n: usize, params: &LifParams) -> Self {
        Self { v: vec![T::lit(params.v_reset); n], refractory_remaining: vec![T::zero(); n] }
    }

    pub fn reset(&mut self, params: &LifParams) {
        self.v.fill(T::lit(params.v_reset));
        self.refractory_remaining.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// Result of one LIF update.
#[derive(Debug, Clone, PartialEq)]
pub struct LifStep<T> {
    pub spikes: Vec<bool>,
    /// Voltage reached this step, before any reset.
    pub candidate: Vec<T>,
}

/// Advances every neuron by `params.dt` under constant input current `j`.
///
/// A neuron still refractory at the start of the step integrates only for the
/// part of the step after its refractory period ends; a neuron refractory for
/// the whole step stays at `v_reset`.
pub fn lif_step<T: Real>(state: &mut LifLayerState<T>, j: &[T], params: &LifParams) -> Result<LifStep<T>> {
    if j.len() != state.len() {
        return Err(Error::shape(format!("LIF layer has {} neurons, got {} currents", state.len(), j.len())));
    }
    if let Some(i) = j.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite input current at neuron {i}")));
    }
    let dt = T::lit(params.dt);
    let tau = T::lit(params.tau_rc);
    let v_th = T::lit(params.v_threshold);
    let v_reset = T::lit(params.v_reset);
    let t_ref = T::lit(params.t_ref);
    let full_decay = (-dt / tau).exp();

    let mut spikes = vec![false; j.len()];
    let mut candidate = vec![v_reset; j.len()];
    for i in 0..j.len() {
        let rem = state.refractory_remaining[i];
        let active = (dt - rem).max(T::zero());
        state.refractory_remaining[i] = (rem - dt).max(T::zero());
        if active <= T::zero() {
            state.v[i] = v_reset;
            continue;
        }
        let decay = if rem > T::zero() { (-active / tau).exp() } else { full_decay };
        let v = j[i] + (state.v[i] - j[i]) * decay;
        candidate[i] = v;
        if v > v_th {
            spikes[i] = true;
            state.v[i] = v_reset;
            state.refractory_remaining[i] = t_ref;
        } else {
            state.v[i] = v;
        }
    }
    Ok(LifStep { spikes, candidate })
}

/// Steady-state firing rate (Hz) under a constant current.
pub fn analytic_lif_rate(j: f64, params: &LifParams) -> f64 {
    if j <= params.v_threshold {
        return 0.0;
    }
    let t_fire = params.tau_rc * ((j - params.v_reset) / (j - params.v_threshold)).ln();
    1.0 / (params.t_ref + t_fire)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64, j: f64) -> (f64, bool, f64) {
        let params = LifParams::default().with_dt(0.00390625);
        let mut s = LifLayerState { v: vec![v], refractory_remaining: vec![0.0] };
        let out = lif_step(&mut s, &[j], &params).unwrap();
        (s.v[0], out.spikes[0], out.candidate[0])
    }

    #[test]
    fn scalar_examples() {
        assert_eq!(single(0.0, 0.0), (0.0, false, 0.0));

        let (v, spike, _) = single(0.5, 0.0);
        assert!(!spike);
        assert!((v - 0.5 * (-0.1953125f64).exp()).abs() < 1e-15);
        assert!((v - 0.411289).abs() < 5e-7);

        let (v, spike, cand) = single(0.9, 2.0);
        assert!(spike);
        assert_eq!(v, 0.0);
        assert!((cand - (2.0 - 1.1 * (-0.1953125f64).exp())).abs() < 1e-15);
        assert!((cand - 1.095164).abs() < 1e-6);
    }

    #[test]
    fn analytic_rate_examples() {
        let p = LifParams::default();
        assert_eq!(analytic_lif_rate(1.0, &p), 0.0);
        assert_eq!(analytic_lif_rate(0.2, &p), 0.0);
        let r = analytic_lif_rate(2.0, &p);
        assert!((r - 1.0 / (0.002 + 0.020 * 2f64.ln())).abs() < 1e-12);
        assert!((r - 63.04).abs() < 0.01);
        assert!((analytic_lif_rate(1e9, &p) - 500.0).abs() < 1e-3);
    }

    /// Mean inter-spike interval of a single neuron driven by a constant
    /// current for `duration` seconds.
    fn simulated_rate(j: f64, params: &LifParams, duration: f64) -> f64 {
        let mut s = LifLayerState::<f64>::new(1, params);
        let steps = (duration / params.dt) as usize;
        let spike_steps: Vec<usize> =
            (0..steps).filter(|_| lif_step(&mut s, &[j], params).unwrap().spikes[0]).collect();
        assert!(spike_steps.len() > 2);
        let span = (spike_steps[spike_steps.len() - 1] - spike_steps[0]) as f64 * params.dt;
        (spike_steps.len() - 1) as f64 / span
    }

    #[test]
    fn simulated_rate_within_quantization_bound() {
        for dt in [1.0 / 256.0, 1e-3, 1e-4] {
            let p = LifParams::default().with_dt(dt);
            for j in [1.5, 2.0, 3.0, 5.0] {
                let r = analytic_lif_rate(j, &p);
                let sim = simulated_rate(j, &p, 5.0);
                assert!((sim - r).abs() <= r * r * dt, "dt={dt} J={j}: sim {sim} vs analytic {r}");
            }
        }
    }

    #[test]
    fn refractory_blocks_spikes_and_voltage_stays_bounded() {
        let p = LifParams { t_ref: 0.01, ..LifParams::default() }.with_dt(1e-3);
        let mut s = LifLayerState::<f64>::new(3, &p);
        let j = [50.0, 3.0, 0.5];
        let mut last_spike = [None::<usize>; 3];
        for t in 0..2000 {
            let out = lif_step(&mut s, &j, &p).unwrap();
            for i in 0..3 {
                assert!(s.v[i] <= p.v_threshold);
                if out.spikes[i] {
                    if let Some(prev) = last_spike[i] {
                        assert!((t - prev) as f64 * p.dt > p.t_ref - 1e-12);
                    }
                    last_spike[i] = Some(t);
                }
            }
        }
        assert!(last_spike[0].is_some() && last_spike[2].is_none());
    }

    #[test]
    fn refractory_longer_than_a_step_holds_reset() {
        let p = LifParams { t_ref: 0.0025, ..LifParams::default() }.with_dt(1e-3);
        let mut s = LifLayerState { v: vec![0.99], refractory_remaining: vec![0.0] };
        assert!(lif_step(&mut s, &[100.0], &p).unwrap().spikes[0]);
        for _ in 0..2 {
            let out = lif_step(&mut s, &[100.0], &p).unwrap();
            assert!(!out.spikes[0]);
            assert_eq!(s.v[0], 0.0);
        }
        // half a step of integration remains in the third step
        let out = lif_step(&mut s, &[100.0], &p).unwrap();
        assert!(out.spikes[0]);
    }

    #[test]
    fn validation() {
        assert!(LifParams::default().validate().is_ok());
        assert!(LifParams { tau_rc: 0.0, ..LifParams::default() }.validate().is_err());
        assert!(LifParams { t_ref: -1.0, ..LifParams::default() }.validate().is_err());
        assert!(LifParams { v_reset: 1.0, ..LifParams::default() }.validate().is_err());
        let mut s = LifLayerState::<f32>::new(2, &LifParams::default());
        assert!(lif_step(&mut s, &[1.0], &LifParams::default()).is_err());
        assert!(lif_step(&mut s, &[1.0, f32::INFINITY], &LifParams::default()).is_err());
        assert_eq!(LifParams::for_stride(64).dt, 0.25);
    }
}
