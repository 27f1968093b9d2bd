//! DSP primitives for EEG preprocessing and speech-envelope extraction.
//!
//! Everything here is a pure function of its inputs and runs in `f64`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Sampled signal with its rate in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub fs: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::param(format!("sampling rate must be positive, got {fs}")));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, fs })
    }

    /// Builds a waveform by evaluating `f` at `n` sample instants.
    pub fn from_fn(n: usize, fs: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..n).map(|i| f(i as f64 / fs)).collect(), fs)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// Linear-phase FIR filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
    fs: f64,
    band: Option<(f64, f64)>,
}

impl FirFilter {
    /// Wraps arbitrary taps. The tap count must be odd and the taps exactly
    /// symmetric so that the group delay is an integer number of samples.
    pub fn from_taps(taps: Vec<f64>, fs: f64) -> Result<Self> {
        if taps.len() % 2 == 0 {
            return Err(Error::param(format!(
                "linear-phase FIR needs an odd tap count, got {}",
                taps.len()
            )));
        }
        let n = taps.len();
        if (0..n / 2).any(|i| taps[i] != taps[n - 1 - i]) {
            return Err(Error::param("FIR taps are not symmetric"));
        }
        if !(fs > 0.0) {
            return Err(Error::param(format!("sampling rate must be positive, got {fs}")));
        }
        Ok(Self { taps, fs, band: None })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Passband edges in Hz, when the filter was designed as a bandpass.
    pub fn band(&self) -> Option<(f64, f64)> {
        self.band
    }

    pub fn group_delay(&self) -> usize {
        self.order() / 2
    }
}

fn hamming(n: usize, len: usize) -> f64 {
    0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hamming-windowed sinc bandpass, normalized to unit gain at the band center.
pub fn design_fir_bandpass(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Result<FirFilter> {
    if order < 2 || order % 2 != 0 {
        return Err(Error::param(format!("FIR order must be even and >= 2, got {order}")));
    }
    if !(fs > 0.0) {
        return Err(Error::param(format!("sampling rate must be positive, got {fs}")));
    }
    if !(0.0 < low_hz && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(Error::param(format!(
            "band edges must satisfy 0 < low < high < fs/2, got [{low_hz}, {high_hz}] at fs={fs}"
        )));
    }
    let len = order + 1;
    let half = order / 2;
    let (f1, f2) = (low_hz / fs, high_hz / fs);
    let mut taps = vec![0.0; len];
    for n in 0..=half {
        let m = n as f64 - half as f64;
        let ideal = 2.0 * f2 * sinc(2.0 * f2 * m) - 2.0 * f1 * sinc(2.0 * f1 * m);
        let v = ideal * hamming(n, len);
        taps[n] = v;
        taps[order - n] = v;
    }

    // Zero-phase response at the band center is real for symmetric taps.
    let w = 2.0 * PI * (low_hz + high_hz) / 2.0 / fs;
    let gain: f64 = taps
        .iter()
        .enumerate()
        .map(|(n, h)| h * (w * (n as f64 - half as f64)).cos())
        .sum();
    for t in &mut taps {
        *t /= gain;
    }
    Ok(FirFilter { taps, fs, band: Some((low_hz, high_hz)) })
}

/// Direct-form convolution with the group delay removed, so the output stays
/// aligned with the input. Samples beyond either edge are treated as zero, which
/// degrades the first and last `order / 2` output samples.
pub fn apply_fir(filter: &FirFilter, x: &Waveform) -> Result<Waveform> {
    if filter.fs != x.fs {
        return Err(Error::param(format!(
            "filter designed for {} Hz applied to a {} Hz signal",
            filter.fs, x.fs
        )));
    }
    let order = filter.order();
    if x.len() <= order {
        return Err(Error::param(format!(
            "signal of {} samples is too short for an order-{order} filter",
            x.len()
        )));
    }
    let delay = filter.group_delay() as isize;
    let n = x.len() as isize;
    let samples = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (k, h) in filter.taps.iter().enumerate() {
                let j = i + delay - k as isize;
                if (0..n).contains(&j) {
                    acc += h * x.samples[j as usize];
                }
            }
            acc
        })
        .collect();
    Ok(Waveform { samples, fs: x.fs })
}

/// Second-order IIR notch coefficients `(b, a)` with `a[0] == 1`.
pub fn notch_coefficients(center_hz: f64, q: f64, fs: f64) -> Result<([f64; 3], [f64; 3])> {
    if !(q > 0.0) {
        return Err(Error::param(format!("notch quality factor must be positive, got {q}")));
    }
    if !(fs > 2.0 * center_hz) {
        return Err(Error::param(format!(
            "a {center_hz} Hz notch needs fs > {}, got {fs}",
            2.0 * center_hz
        )));
    }
    let w0 = 2.0 * PI * center_hz / fs;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let c = -2.0 * w0.cos();
    Ok(([1.0 / a0, c / a0, 1.0 / a0], [1.0, c / a0, (1.0 - alpha) / a0]))
}

/// Mains-interference notch at 60 Hz (biquad, zero initial state).
pub fn notch_60(x: &Waveform, q: f64) -> Result<Waveform> {
    let (b, a) = notch_coefficients(60.0, q, x.fs)?;
    // transposed direct form II
    let (mut s1, mut s2) = (0.0, 0.0);
    let samples = x
        .samples
        .iter()
        .map(|&v| {
            let y = b[0] * v + s1;
            s1 = b[1] * v - a[1] * y + s2;
            s2 = b[2] * v - a[2] * y;
            y
        })
        .collect();
    Ok(Waveform { samples, fs: x.fs })
}

/// Magnitude of the analytic signal, computed with a full-length FFT
/// (any length; rustfft handles non-powers of two).
pub fn hilbert_envelope(x: &Waveform) -> Result<Waveform> {
    let n = x.len();
    if n < 8 {
        return Err(Error::param(format!("Hilbert envelope needs >= 8 samples, got {n}")));
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);

    // Keep DC (and Nyquist for even n), double positive bins, drop negative bins.
    let nyquist = if n % 2 == 0 { Some(n / 2) } else { None };
    let positive_end = n.div_ceil(2);
    for (k, c) in buf.iter_mut().enumerate() {
        if k == 0 || Some(k) == nyquist {
            continue;
        }
        if k < positive_end {
            *c *= 2.0;
        } else {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let samples = buf.iter().map(|c| c.norm() * scale).collect();
    Ok(Waveform { samples, fs: x.fs })
}

/// Scales to unit mean-square power. Signals already at unit power (to within
/// accumulated rounding) are returned untouched, which makes the operation
/// idempotent bit-for-bit.
pub fn normalize_energy(x: &Waveform) -> Result<Waveform> {
    let n = x.len();
    if n == 0 || x.samples.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput("cannot normalize an all-zero signal".into()));
    }
    let ms = x.samples.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let tol = 2.0 * (n as f64 + 4.0) * f64::EPSILON;
    if (ms - 1.0).abs() <= tol {
        return Ok(x.clone());
    }
    let scale = 1.0 / ms.sqrt();
    Ok(Waveform { samples: x.samples.iter().map(|v| v * scale).collect(), fs: x.fs })
}

/// Linear interpolation onto a uniform grid at `to_fs` covering the same span
/// `[0, (n - 1) / fs]` as the input.
pub fn resample_linear(x: &Waveform, to_fs: f64) -> Result<Waveform> {
    if !(to_fs > 0.0 && to_fs.is_finite()) {
        return Err(Error::param(format!("target rate must be positive, got {to_fs}")));
    }
    let n = x.len();
    if n == 0 {
        return Ok(Waveform { samples: Vec::new(), fs: to_fs });
    }
    let ratio = x.fs / to_fs;
    let m = (((n - 1) as f64) / ratio + 1e-9).floor() as usize + 1;
    let samples = (0..m)
        .map(|j| {
            let p = j as f64 * ratio;
            let i = (p.floor() as usize).min(n - 1);
            if i + 1 >= n {
                return x.samples[n - 1];
            }
            let frac = p - i as f64;
            x.samples[i] + frac * (x.samples[i + 1] - x.samples[i])
        })
        .collect();
    Ok(Waveform { samples, fs: to_fs })
}
