//! Trials, samples and everything needed to turn recordings (or synthetic
//! stand-ins) into windowed training samples.

mod manifest;
mod synth;
pub mod tensor;

use std::fmt;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{apply_fir, design_fir_bandpass, notch_60, Waveform};

pub use manifest::{load_trials, save_trials, Manifest, ManifestRecord};
pub use synth::{channel_names, synth_session, synth_trial, SyntheticConfig};
pub use tensor::{read_tensor, write_tensor, DType, Tensor, TensorData};

/// EEG sampling rate used throughout.
pub const EEG_FS: f64 = 256.0;

/// The sixteen recorded electrodes, in acquisition order.
pub const ALL_CHANNELS: [&str; 16] = [
    "P1", "PZ", "P2", "CP1", "CPZ", "CP2", "CZ", "C3", "C4", "T7", "T8", "FC3", "FC4", "F3", "F4", "FZ",
];

/// The eight electrodes over the auditory cortex used by the compact models.
pub const AUDITORY_CHANNELS: [&str; 8] = ["C3", "C4", "CZ", "CPZ", "CP1", "CP2", "P1", "P2"];

/// Attended speaker. Class index 0 is the female speaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    F,
    M,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::F, Label::M];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::F
        } else {
            Label::M
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::F => Label::M,
            Label::M => Label::F,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::F => "F",
            Label::M => "M",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F" | "f" => Ok(Label::F),
            "M" | "m" => Ok(Label::M),
            _ => Err(Error::Data(format!("label must be F or M, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionKind {
    Calibration,
    Online,
}

/// One recording segment: EEG rows plus both speech envelopes at 256 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub eeg: Array2<f32>,
    pub env_f: Vec<f32>,
    pub env_m: Vec<f32>,
    pub label: Label,
    pub channel_names: Vec<String>,
    pub subject_id: String,
    pub session: SessionKind,
}

impl Trial {
    pub fn new(
        eeg: Array2<f32>,
        env_f: Vec<f32>,
        env_m: Vec<f32>,
        label: Label,
        channel_names: Vec<String>,
        subject_id: impl Into<String>,
        session: SessionKind,
    ) -> Result<Self> {
        let trial = Self { eeg, env_f, env_m, label, channel_names, subject_id: subject_id.into(), session };
        trial.validate()?;
        Ok(trial)
    }

    pub fn validate(&self) -> Result<()> {
        let (c, t) = self.eeg.dim();
        if c == 0 || t == 0 {
            return Err(Error::shape("trial has no EEG data"));
        }
        if self.env_f.len() != t || self.env_m.len() != t {
            return Err(Error::shape(format!(
                "envelope lengths ({}, {}) differ from EEG length {t}",
                self.env_f.len(),
                self.env_m.len()
            )));
        }
        if self.channel_names.len() != c {
            return Err(Error::shape(format!(
                "{} channel names for {c} EEG rows",
                self.channel_names.len()
            )));
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.eeg.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.eeg.ncols()
    }
}

/// Restricts a trial to the named channels, in the order given.
pub fn select_channels(trial: &Trial, names: &[impl AsRef<str>]) -> Result<Trial> {
    let mut rows = Vec::with_capacity(names.len());
    let mut missing = Vec::new();
    for name in names {
        match trial.channel_names.iter().position(|c| c == name.as_ref()) {
            Some(i) => rows.push(i),
            None => missing.push(name.as_ref().to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnknownChannel(missing));
    }
    let eeg = trial.eeg.select(ndarray::Axis(0), &rows);
    Ok(Trial {
        eeg,
        channel_names: rows.iter().map(|&i| trial.channel_names[i].clone()).collect(),
        ..trial.clone()
    })
}

/// Stacks the model input: row 0 is the female envelope, rows `1..=C` the
/// EEG channels and row `C + 1` the male envelope.
pub fn build_input(trial: &Trial) -> Result<Array2<f32>> {
    trial.validate()?;
    let (c, t) = trial.eeg.dim();
    let mut input = Array2::zeros((c + 2, t));
    input.row_mut(0).assign(&ndarray::ArrayView1::from(&trial.env_f));
    input.slice_mut(s![1..=c, ..]).assign(&trial.eeg);
    input.row_mut(c + 1).assign(&ndarray::ArrayView1::from(&trial.env_m));
    Ok(input)
}

/// Splits a stacked input back into `(env_f, eeg, env_m)`.
pub fn unstack_input(input: ArrayView2<'_, f32>) -> Result<(Vec<f32>, Array2<f32>, Vec<f32>)> {
    let rows = input.nrows();
    if rows < 3 {
        return Err(Error::shape(format!("stacked input needs >= 3 rows, got {rows}")));
    }
    Ok((input.row(0).to_vec(), input.slice(s![1..rows - 1, ..]).to_owned(), input.row(rows - 1).to_vec()))
}

/// One decision window ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    input: Array2<f32>,
    pub label: Label,
    pub window_s: f64,
}

impl Sample {
    pub fn new(input: Array2<f32>, label: Label, window_s: f64) -> Result<Self> {
        if input.nrows() < 3 {
            return Err(Error::shape(format!(
                "sample needs two envelope rows around at least one EEG row, got {} rows",
                input.nrows()
            )));
        }
        if input.ncols() == 0 {
            return Err(Error::shape("empty sample"));
        }
        Ok(Self { input, label, window_s })
    }

    pub fn input(&self) -> &Array2<f32> {
        &self.input
    }

    pub fn eeg_channels(&self) -> usize {
        self.input.nrows() - 2
    }
}

/// Converts a window length in seconds to a sample count, requiring an exact
/// integer number of samples.
pub fn window_len(window_s: f64) -> Result<usize> {
    let n = window_s * EEG_FS;
    if !(window_s > 0.0) || (n - n.round()).abs() > 1e-9 {
        return Err(Error::param(format!("window of {window_s} s is not a whole number of samples")));
    }
    Ok(n.round() as usize)
}

/// Cuts every trial into consecutive non-overlapping windows, discarding the
/// remainder. Samples keep the label of their trial.
pub fn window_samples(trials: &[Trial], window_s: f64) -> Result<Vec<Sample>> {
    let len = window_len(window_s)?;
    let mut out = Vec::new();
    for (i, trial) in trials.iter().enumerate() {
        let total = trial.n_samples();
        if len > total {
            return Err(Error::param(format!(
                "window of {window_s} s exceeds trial {i} ({} s)",
                total as f64 / EEG_FS
            )));
        }
        let input = build_input(trial)?;
        for w in 0..total / len {
            let slice = input.slice(s![.., w * len..(w + 1) * len]).to_owned();
            out.push(Sample::new(slice, trial.label, window_s)?);
        }
    }
    Ok(out)
}

/// Seeded, label-stratified split. The training part holds exactly
/// `floor(ratio * N)` samples and each class is within one sample of its
/// proportional share.
pub fn split_train_val<S: Clone>(
    samples: &[S],
    label_of: impl Fn(&S) -> Label,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<S>, Vec<S>)> {
    if samples.is_empty() {
        return Err(Error::DegenerateInput("cannot split an empty sample list".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::param(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: Vec<Vec<usize>> = Label::ALL
        .iter()
        .map(|&l| (0..samples.len()).filter(|&i| label_of(&samples[i]) == l).collect())
        .collect();
    for g in &mut groups {
        g.shuffle(&mut rng);
    }

    let total_train = (ratio * samples.len() as f64).floor() as usize;
    let mut quota: Vec<usize> = groups.iter().map(|g| (ratio * g.len() as f64).floor() as usize).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let frac = |k: usize| ratio * groups[k].len() as f64 - quota[k] as f64;
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    let mut left = total_train - quota.iter().sum::<usize>();
    for &k in order.iter().cycle().take(order.len() * 2) {
        if left == 0 {
            break;
        }
        if quota[k] < groups[k].len() {
            quota[k] += 1;
            left -= 1;
        }
    }

    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for (g, &q) in groups.iter().zip(&quota) {
        train_idx.extend_from_slice(&g[..q]);
        val_idx.extend_from_slice(&g[q..]);
    }
    train_idx.shuffle(&mut rng);
    val_idx.shuffle(&mut rng);
    Ok((
        train_idx.iter().map(|&i| samples[i].clone()).collect(),
        val_idx.iter().map(|&i| samples[i].clone()).collect(),
    ))
}

/// Digital EEG cleanup applied before windowing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Linear-phase bandpass `(order, low_hz, high_hz)`; `None` skips it.
    pub bandpass: Option<(usize, f64, f64)>,
    /// Quality factor of the 60 Hz notch; `None` skips it.
    pub notch_q: Option<f64>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { bandpass: Some((128, 0.5, 40.0)), notch_q: None }
    }
}

/// Filters every EEG row. Envelopes are left untouched.
pub fn preprocess_trial(trial: &Trial, cfg: &PreprocessConfig) -> Result<Trial> {
    let fir = cfg.bandpass.map(|(order, lo, hi)| design_fir_bandpass(order, lo, hi, EEG_FS)).transpose()?;
    let mut eeg = trial.eeg.clone();
    for mut row in eeg.rows_mut() {
        let mut w = Waveform::new(row.iter().map(|&v| v as f64).collect(), EEG_FS)?;
        if let Some(q) = cfg.notch_q {
            w = notch_60(&w, q)?;
        }
        if let Some(f) = &fir {
            w = apply_fir(f, &w)?;
        }
        for (dst, src) in row.iter_mut().zip(&w.samples) {
            *dst = *src as f32;
        }
    }
    Ok(Trial { eeg, ..trial.clone() })
}
