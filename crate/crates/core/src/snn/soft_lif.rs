use super::lif::LifParams;
use crate::error::{Error, Result};
use crate::real::Real;

/// Below this value of `z / gamma` the softplus is treated as exactly zero.
const SOFTPLUS_CUTOFF: f64 = -100.0;

/// Smooth LIF rate curve used in place of spiking units during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftLifConfig {
    pub gamma: f64,
    /// Multiplies the rate (Hz) to give the unit's activation.
    pub amplitude: f64,
}

impl SoftLifConfig {
    /// `gamma = 0.02`, amplitude `t_ref` so activations stay within `[0, 1]`.
    pub fn for_lif(params: &LifParams) -> Self {
        let amplitude = if params.t_ref > 0.0 { params.t_ref } else { 1.0 };
        Self { gamma: 0.02, amplitude }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(format!("soft-LIF gamma must be positive, got {}", self.gamma)));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::param(format!("soft-LIF amplitude must be positive, got {}", self.amplitude)));
        }
        Ok(())
    }

    /// `(amplitude * rate, amplitude * d rate / dJ)`
    pub fn activation<T: Real>(&self, j: T, params: &LifParams) -> (T, T) {
        let (r, dr) = soft_lif_rate(j, self.gamma, params);
        let a = T::lit(self.amplitude);
        (a * r, a * dr)
    }
}

/// `(softplus, d softplus / dz)` with `softplus(z) = gamma * ln(1 + e^(z / gamma))`.
fn softplus<T: Real>(z: T, gamma: T) -> (T, T) {
    let x = z / gamma;
    if x < T::lit(SOFTPLUS_CUTOFF) {
        return (T::zero(), T::zero());
    }
    let (p, sig) = if x > T::zero() {
        let e = (-x).exp();
        (z + gamma * e.ln_1p(), T::one() / (T::one() + e))
    } else {
        let e = x.exp();
        (gamma * e.ln_1p(), e / (T::one() + e))
    };
    (p, sig)
}

/// Smoothed firing rate (Hz) and its derivative with respect to `j`.
pub fn soft_lif_rate<T: Real>(j: T, gamma: f64, params: &LifParams) -> (T, T) {
    let span = T::lit(params.v_threshold - params.v_reset);
    let tau = T::lit(params.tau_rc);
    let (p, dp) = softplus(j - T::lit(params.v_threshold), T::lit(gamma));
    if p <= T::zero() {
        return (T::zero(), T::zero());
    }
    let r = T::one() / (T::lit(params.t_ref) + tau * (span / p).ln_1p());
    let dr = r * r * tau * span * dp / (p * (p + span));
    (r, dr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{rel_err, step};
    use crate::snn::analytic_lif_rate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn far_below_threshold_is_silent() {
        let p = LifParams::default();
        assert!(soft_lif_rate(-5.0f64, 0.02, &p).0 <= 1e-6);
        assert!(soft_lif_rate(-5.0f32, 0.02, &p).0 <= 1e-6);
    }

    #[test]
    fn close_to_analytic_rate_above_threshold() {
        let p = LifParams::default();
        let (r, _) = soft_lif_rate(2.0f64, 0.02, &p);
        let exact = analytic_lif_rate(2.0, &p);
        assert!((r - exact).abs() / exact < 0.01);
    }

    #[test]
    fn converges_as_gamma_shrinks() {
        let p = LifParams::default();
        let exact = analytic_lif_rate(2.0, &p);
        let errs: Vec<f64> = [1.0, 0.1, 0.01].iter().map(|&g| (soft_lif_rate(2.0f64, g, &p).0 - exact).abs()).collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let p = LifParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let j: f64 = rng.random_range(0.5..4.0);
            let h = step(j);
            let numeric = (soft_lif_rate(j + h, 0.02, &p).0 - soft_lif_rate(j - h, 0.02, &p).0) / (2.0 * h);
            let analytic = soft_lif_rate(j, 0.02, &p).1;
            assert!(rel_err(analytic, numeric) <= 1e-5, "J={j}: {analytic} vs {numeric}");
        }
    }

    #[test]
    fn activation_is_scaled_rate() {
        let p = LifParams::default();
        let cfg = SoftLifConfig::for_lif(&p);
        assert!(cfg.validate().is_ok());
        let (a, da) = cfg.activation(2.0f64, &p);
        let (r, dr) = soft_lif_rate(2.0f64, 0.02, &p);
        assert_eq!((a, da), (r * 0.002, dr * 0.002));
        assert!(cfg.activation(1e6f64, &p).0 <= 1.0);
        assert!(SoftLifConfig { gamma: 0.0, amplitude: 1.0 }.validate().is_err());
    }
}
