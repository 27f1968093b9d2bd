//! Synthetic cocktail-party trials.
//!
//! Two independent speech-like envelopes are produced by amplitude-modulating
//! white noise at audio rate, taking the Hilbert envelope, smoothing and
//! resampling to the EEG rate. Each EEG channel then carries a delayed,
//! weighted copy of the attended envelope, a weaker copy of the unattended
//! one and white Gaussian noise:
//!
//! ```text
//! eeg[c](t) = a * w[c, att] * env_att(t - d) + r * w[c, un] * env_un(t - d) + s * n_c(t)
//! ```

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Label, SessionKind, Trial, ALL_CHANNELS, AUDITORY_CHANNELS, EEG_FS};
use crate::error::{Error, Result};
use crate::signal::{hilbert_envelope, normalize_energy, resample_linear, Waveform};

const AUDIO_FS: f64 = 1024.0;
const SMOOTHING: usize = 32;
const MODULATOR_COMPONENTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_channels: usize,
    pub duration_s: f64,
    /// Gain of the attended envelope.
    pub attend_gain: f64,
    /// Gain of the unattended envelope, in `[0, 1)`.
    pub unattended_gain: f64,
    pub noise_sigma: f64,
    pub neural_delay_ms: f64,
    /// Per-channel weights `[w_female, w_male]`. Empty means all ones.
    pub spatial_weights: Vec<[f64; 2]>,
    pub attended: Label,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_channels: 8,
            duration_s: 20.0,
            attend_gain: 1.0,
            unattended_gain: 0.3,
            noise_sigma: 0.5,
            neural_delay_ms: 100.0,
            spatial_weights: Vec::new(),
            attended: Label::F,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("{field}: {why}")));
        if self.n_channels == 0 {
            return bad("n_channels", "must be at least 1".into());
        }
        if !(self.duration_s > 0.0) || (self.duration_s * EEG_FS).fract().abs() > 1e-9 {
            return bad("duration_s", format!("{} is not a positive whole number of samples", self.duration_s));
        }
        if !(self.attend_gain > 0.0) {
            return bad("attend_gain", format!("must be > 0, got {}", self.attend_gain));
        }
        if !(0.0..1.0).contains(&self.unattended_gain) {
            return bad("unattended_gain", format!("must lie in [0, 1), got {}", self.unattended_gain));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma", format!("must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.neural_delay_ms >= 0.0) {
            return bad("neural_delay_ms", format!("must be >= 0, got {}", self.neural_delay_ms));
        }
        if !self.spatial_weights.is_empty() && self.spatial_weights.len() != self.n_channels {
            return bad(
                "spatial_weights",
                format!("{} rows for {} channels", self.spatial_weights.len(), self.n_channels),
            );
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * EEG_FS).round() as usize
    }

    pub fn delay_samples(&self) -> usize {
        (self.neural_delay_ms * EEG_FS / 1000.0).round() as usize
    }

    fn weight(&self, channel: usize, speaker: Label) -> f64 {
        self.spatial_weights.get(channel).map_or(1.0, |w| w[speaker.index()])
    }
}

/// Default electrode names for a synthetic montage of `n` channels.
pub fn channel_names(n: usize) -> Vec<String> {
    match n {
        8 => AUDITORY_CHANNELS.iter().map(|s| s.to_string()).collect(),
        n if n <= ALL_CHANNELS.len() => ALL_CHANNELS[..n].iter().map(|s| s.to_string()).collect(),
        n => (0..n).map(|i| format!("CH{i}")).collect(),
    }
}

fn centered_moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(width / 2);
            let hi = (i + width / 2).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Envelope of amplitude-modulated noise, `n` samples at 256 Hz.
fn speech_envelope(rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<f64>> {
    let up = (AUDIO_FS / EEG_FS) as usize;
    let na = n * up;
    let components: Vec<(f64, f64, f64)> = (0..MODULATOR_COMPONENTS)
        .map(|_| (rng.random_range(0.5..6.0), rng.random_range(0.0..2.0 * PI), rng.random_range(0.5..1.0)))
        .collect();
    let slow: Vec<f64> = (0..na)
        .map(|i| {
            let t = i as f64 / AUDIO_FS;
            components.iter().map(|(f, ph, a)| a * (2.0 * PI * f * t + ph).sin()).sum()
        })
        .collect();
    let peak = slow.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let am: Vec<f64> = slow
        .iter()
        .map(|v| {
            let carrier: f64 = StandardNormal.sample(rng);
            (1.5 * v / peak).exp() * carrier
        })
        .collect();
    let env = hilbert_envelope(&Waveform::new(am, AUDIO_FS)?)?;
    let smooth = Waveform::new(centered_moving_average(&env.samples, SMOOTHING), AUDIO_FS)?;
    let low = resample_linear(&smooth, EEG_FS)?;
    debug_assert_eq!(low.len(), n);
    Ok(low.samples)
}

/// Brings the presented part `full[history..]` to unit power and scales the
/// history by the same factor.
fn normalize_presented(full: &[f64], history: usize) -> Result<Vec<f64>> {
    let present = &full[history..];
    let unit = normalize_energy(&Waveform::new(present.to_vec(), EEG_FS)?)?;
    let ms = present.iter().map(|v| v * v).sum::<f64>() / present.len() as f64;
    let scale = 1.0 / ms.sqrt();
    Ok(full[..history].iter().map(|v| v * scale).chain(unit.samples).collect())
}

/// Generates one trial. Identical configs give bit-identical trials.
pub fn synth_trial(cfg: &SyntheticConfig) -> Result<Trial> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_samples();
    let d = cfg.delay_samples();

    // Envelopes include `d` samples of history so the delayed copy in the EEG is
    // defined from the first sample on.
    let full_f = normalize_presented(&speech_envelope(&mut rng, n + d)?, d)?;
    let full_m = normalize_presented(&speech_envelope(&mut rng, n + d)?, d)?;
    let (full_att, full_un) = match cfg.attended {
        Label::F => (&full_f, &full_m),
        Label::M => (&full_m, &full_f),
    };
    let unattended = cfg.attended.other();

    let mut eeg = Array2::<f32>::zeros((cfg.n_channels, n));
    for c in 0..cfg.n_channels {
        let wa = cfg.attend_gain * cfg.weight(c, cfg.attended);
        let wu = cfg.unattended_gain * cfg.weight(c, unattended);
        for t in 0..n {
            let noise: f64 = StandardNormal.sample(&mut rng);
            eeg[[c, t]] = (wa * full_att[t] + wu * full_un[t] + cfg.noise_sigma * noise) as f32;
        }
    }
    let present = |full: &[f64]| full[d..].iter().map(|&v| v as f32).collect::<Vec<f32>>();
    Trial::new(
        eeg,
        present(&full_f),
        present(&full_m),
        cfg.attended,
        channel_names(cfg.n_channels),
        "SYN",
        SessionKind::Calibration,
    )
}

/// A synthetic subject: `n_trials` trials alternating F/M, the last
/// `n_online` of which are marked as the online (test) session. Per-trial
/// seeds are drawn from `template.seed`.
pub fn synth_session(template: &SyntheticConfig, n_trials: usize, n_online: usize) -> Result<Vec<Trial>> {
    if n_online > n_trials {
        return Err(Error::Config(format!("n_online ({n_online}) exceeds n_trials ({n_trials})")));
    }
    template.validate()?;
    let mut seeder = ChaCha8Rng::seed_from_u64(template.seed);
    let seeds: Vec<u64> = (0..n_trials).map(|_| seeder.random()).collect();
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let cfg = SyntheticConfig { seed, attended: Label::from_index(i % 2), ..template.clone() };
            let mut trial = synth_trial(&cfg)?;
            if i >= n_trials - n_online {
                trial.session = SessionKind::Online;
            }
            Ok(trial)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pearson correlation of `a[lag..]` against `b[..len - lag]`.
    fn lagged_corr(a: &[f32], b: &[f32], lag: usize) -> f64 {
        let a = &a[lag..];
        let b = &b[..b.len() - lag];
        let n = a.len() as f64;
        let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
        let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (&x, &y) in a.iter().zip(b) {
            let (x, y) = (x as f64 - ma, y as f64 - mb);
            sab += x * y;
            saa += x * x;
            sbb += y * y;
        }
        sab / (saa * sbb).sqrt()
    }

    /// Matched filter: channel-averaged, delay-compensated correlation.
    fn matched_filter(trial: &Trial, delay: usize) -> Label {
        let score = |env: &[f32]| {
            trial.eeg.rows().into_iter().map(|r| lagged_corr(r.as_slice().unwrap(), env, delay)).sum::<f64>()
        };
        if score(&trial.env_f) >= score(&trial.env_m) {
            Label::F
        } else {
            Label::M
        }
    }

    #[test]
    fn noiseless_channels_copy_attended_envelope() {
        for attended in Label::ALL {
            let cfg = SyntheticConfig {
                noise_sigma: 0.0,
                unattended_gain: 0.0,
                duration_s: 4.0,
                attended,
                seed: 11,
                ..Default::default()
            };
            let t = synth_trial(&cfg).unwrap();
            assert_eq!(t.label, attended);
            let env = if attended == Label::F { &t.env_f } else { &t.env_m };
            for row in t.eeg.rows() {
                let r = lagged_corr(row.as_slice().unwrap(), env, cfg.delay_samples());
                assert!((r - 1.0).abs() <= 1e-6, "corr {r}");
            }
        }
    }

    #[test]
    fn envelopes_have_unit_power() {
        let t = synth_trial(&SyntheticConfig { duration_s: 2.0, ..Default::default() }).unwrap();
        let p = t.env_f.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / t.env_f.len() as f64;
        assert!((p - 1.0).abs() < 1e-5);
        assert!(t.env_m.iter().all(|&v| v >= 0.0));
        assert_eq!(t.eeg.dim(), (8, 512));
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = SyntheticConfig { duration_s: 2.0, seed: 5, ..Default::default() };
        assert_eq!(synth_trial(&cfg).unwrap(), synth_trial(&cfg).unwrap());
        let other = SyntheticConfig { seed: 6, ..cfg.clone() };
        assert_ne!(synth_trial(&cfg).unwrap().env_f, synth_trial(&other).unwrap().env_f);
    }

    #[test]
    fn noisy_trials_still_favor_attended() {
        let template = SyntheticConfig { noise_sigma: 0.5, unattended_gain: 0.3, seed: 99, ..Default::default() };
        let trials = synth_session(&template, 100, 0).unwrap();
        let hits = trials.iter().filter(|t| matched_filter(t, template.delay_samples()) == t.label).count();
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn matched_filter_is_perfect_without_noise() {
        let template = SyntheticConfig {
            noise_sigma: 0.0,
            unattended_gain: 0.0,
            duration_s: 5.0,
            seed: 3,
            ..Default::default()
        };
        let trials = synth_session(&template, 40, 10).unwrap();
        assert!(trials.iter().all(|t| matched_filter(t, template.delay_samples()) == t.label));
        assert_eq!(trials.iter().filter(|t| t.session == SessionKind::Online).count(), 10);
        assert_eq!(trials.iter().filter(|t| t.label == Label::F).count(), 20);
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let check = |cfg: SyntheticConfig, field: &str| {
            let e = synth_trial(&cfg).unwrap_err().to_string();
            assert!(e.contains(field), "{e}");
        };
        check(SyntheticConfig { noise_sigma: -0.1, ..Default::default() }, "noise_sigma");
        check(SyntheticConfig { unattended_gain: 1.0, ..Default::default() }, "unattended_gain");
        check(SyntheticConfig { attend_gain: 0.0, ..Default::default() }, "attend_gain");
        check(SyntheticConfig { neural_delay_ms: -1.0, ..Default::default() }, "neural_delay_ms");
        check(SyntheticConfig { spatial_weights: vec![[1.0, 1.0]; 3], ..Default::default() }, "spatial_weights");
    }
}
