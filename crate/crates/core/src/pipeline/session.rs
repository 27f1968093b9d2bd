use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::arch::{ArchConfig, ModelKind};
use super::metrics::{evaluate_predictions, Metrics};
use super::models::{HybridModel, Model};
use super::quant::QuantizedTensor;
use super::train::{lambda_sweep, train_phase_a, train_phase_b, train_reference, AdmSettings, TrainConfig, TrainLog};
use crate::adm::event_rate;
use crate::dataset::{
    preprocess_trial, select_channels, split_train_val, window_samples, PreprocessConfig, Sample, SessionKind, Trial,
    AUDITORY_CHANNELS,
};
use crate::error::{Error, Result};

/// Train, validation and test windows of one run.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Picks the configured EEG channels: trials with exactly that many channels
/// are used as they are, wider trials are reduced to the auditory set.
pub fn channel_subset(trial: &Trial, eeg_channels: usize) -> Result<Trial> {
    if trial.n_channels() == eeg_channels {
        Ok(trial.clone())
    } else if eeg_channels == AUDITORY_CHANNELS.len() {
        select_channels(trial, &AUDITORY_CHANNELS)
    } else {
        Err(Error::Data(format!(
            "cannot take {eeg_channels} EEG channels from trials with {}",
            trial.n_channels()
        )))
    }
}

/// Calibration trials become train/validation windows (stratified, seeded);
/// online trials become the test set.
pub fn prepare_splits(
    trials: &[Trial],
    arch: &ArchConfig,
    preprocess: Option<&PreprocessConfig>,
    val_ratio: f64,
    seed: u64,
) -> Result<Splits> {
    let prepared: Vec<Trial> = trials
        .par_iter()
        .map(|t| {
            let t = channel_subset(t, arch.eeg_channels)?;
            match preprocess {
                Some(p) => preprocess_trial(&t, p),
                None => Ok(t),
            }
        })
        .collect::<Result<_>>()?;
    let (calib, online): (Vec<Trial>, Vec<Trial>) =
        prepared.into_iter().partition(|t| t.session == SessionKind::Calibration);
    if calib.is_empty() || online.is_empty() {
        return Err(Error::DegenerateInput(format!(
            "need both calibration and online trials (got {} and {})",
            calib.len(),
            online.len()
        )));
    }
    let calib_windows = window_samples(&calib, arch.window_s)?;
    let (train, val) = split_train_val(&calib_windows, |s| s.label, 1.0 - val_ratio, seed)?;
    let test = window_samples(&online, arch.window_s)?;
    Ok(Splits { train, val, test })
}

pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<Metrics> {
    let predicted: Vec<_> = samples.par_iter().map(|s| model.predict(s.input().view())).collect::<Result<_>>()?;
    let truth: Vec<_> = samples.iter().map(|s| s.label).collect();
    evaluate_predictions(&predicted, &truth)
}

/// Model whose weight tensors were rounded to `bits`, plus the integer form.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub bits: u32,
    /// Dequantized copy used for inference.
    pub model: Model,
    pub tensors: BTreeMap<String, QuantizedTensor>,
}

/// Per-tensor symmetric quantization of every weight tensor. Biases and
/// batch-norm state stay at working precision.
pub fn quantize_weights(model: &Model, bits: u32) -> Result<QuantizedModel> {
    let mut state = model.state();
    let mut tensors = BTreeMap::new();
    for t in state.iter_mut().filter(|t| t.is_weight) {
        let q = QuantizedTensor::quantize(&t.values, t.dims.clone(), bits)?;
        t.values = q.dequantize();
        tensors.insert(t.name.clone(), q);
    }
    let mut out = model.clone();
    out.load_state(&state)?;
    Ok(QuantizedModel { bits, model: out, tensors })
}

/// Everything one training run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: Model,
    pub quantized: Option<QuantizedModel>,
    /// Phase-A network with its dense head, hybrid runs only.
    pub phase_a: Option<Model>,
    pub log: TrainLog,
    pub test: Metrics,
    pub test_quantized: Option<Metrics>,
    pub phase_a_test: Option<Metrics>,
    pub lambda_l1: f64,
    /// Mean ADM event rate on the test set, hybrid runs only.
    pub event_rate: Option<f64>,
    /// Mean synaptic events per test window, hybrid runs only.
    pub synaptic_events: Option<f64>,
}

fn metrics_line(tag: &str, m: &Metrics) -> String {
    format!("{tag} accuracy {:.4} f1 {:.4}", m.accuracy, m.f1)
}

fn hybrid_activity(model: &HybridModel<f32>, samples: &[Sample]) -> Result<(f64, f64)> {
    let runs: Vec<_> = samples.par_iter().map(|s| model.infer(s.input().view())).collect::<Result<_>>()?;
    let frames: Vec<_> = runs.iter().flat_map(|r| r.frames.iter().cloned()).collect();
    let syn = runs.iter().map(|r| r.synaptic_events() as f64).sum::<f64>() / runs.len() as f64;
    Ok((event_rate(&frames)?, syn))
}

/// Trains one model of `tc.model` on fixed splits and evaluates it on the
/// test windows. `bits == 32` skips quantization.
pub fn train_run(
    arch: &ArchConfig,
    tc: &TrainConfig,
    adm: &AdmSettings,
    bits: u32,
    splits: &Splits,
    seed: u64,
) -> Result<RunOutcome> {
    arch.validate()?;
    tc.validate()?;
    let mut log = TrainLog::default();
    log.push(format!(
        "run model {} seed {seed} channels {} conv_out {} window_s {} train {} val {} test {}",
        tc.model,
        arch.eeg_channels,
        arch.conv_out,
        arch.window_s,
        splits.train.len(),
        splits.val.len(),
        splits.test.len()
    ));
    let mut phase_a = None;
    let mut phase_a_test = None;
    let mut lambda_l1 = tc.lambda_l1;
    let mut activity = None;
    let model = match tc.model {
        ModelKind::Hybrid => {
            let a = train_phase_a(arch, tc, &splits.train, &splits.val, seed, &mut log)?;
            let a_model = Model::Reference(a.clone());
            let m = evaluate(&a_model, &splits.test)?;
            log.push(metrics_line("phase-a test", &m));
            phase_a_test = Some(m);
            phase_a = Some(a_model);
            let b = train_phase_b(&a, arch, tc, adm, &splits.train, &splits.val, seed, &mut log)?;
            activity = Some(hybrid_activity(&b.model, &splits.test)?);
            Model::Hybrid(b.model)
        }
        ModelKind::Reference => {
            if tc.lambda_sweep {
                lambda_l1 = lambda_sweep(arch, tc, &splits.train, &splits.val, seed, &mut log)?.chosen;
            }
            log.push(format!("reference lambda_l1 {lambda_l1:e}"));
            Model::Reference(train_reference(arch, tc, lambda_l1, &splits.train, &splits.val, seed, &mut log)?)
        }
    };
    let test = evaluate(&model, &splits.test)?;
    log.push(metrics_line("test", &test));
    if let Some((rate, syn)) = activity {
        log.push(format!("test event_rate {rate:.4} synaptic_events {syn:.1}"));
    }
    let (quantized, test_quantized) = if bits < 32 {
        let q = quantize_weights(&model, bits)?;
        let m = evaluate(&q.model, &splits.test)?;
        log.push(metrics_line(&format!("test-q{bits}"), &m));
        (Some(q), Some(m))
    } else {
        (None, None)
    };
    let deployed = test_quantized.as_ref().unwrap_or(&test);
    log.push(format!("final {} bits {bits}", metrics_line("test", deployed)));
    Ok(RunOutcome {
        model,
        quantized,
        phase_a,
        log,
        test,
        test_quantized,
        phase_a_test,
        lambda_l1,
        event_rate: activity.map(|a| a.0),
        synaptic_events: activity.map(|a| a.1),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSpec {
    pub windows: Vec<f64>,
    pub channels: Vec<usize>,
    pub kinds: Vec<ModelKind>,
    pub n_seeds: usize,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        Self { windows: vec![1.0, 2.0, 3.0, 4.0, 5.0], channels: vec![8, 16], kinds: ModelKind::ALL.to_vec(), n_seeds: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub window_s: f64,
    pub channels: usize,
    pub kind: ModelKind,
    pub n_seeds: usize,
    pub mean_accuracy: f64,
    pub mean_f1: f64,
}

/// Trains and evaluates every (window, channels, kind) cell for seeds
/// `0..n_seeds`. Runs execute in parallel; results come back in cell order.
pub fn run_experiment_matrix(
    trials: &[Trial],
    base_arch: &ArchConfig,
    tc: &TrainConfig,
    adm: &AdmSettings,
    preprocess: Option<&PreprocessConfig>,
    spec: &MatrixSpec,
) -> Result<Vec<CellResult>> {
    if spec.n_seeds == 0 {
        return Err(Error::param("experiment matrix needs at least one seed"));
    }
    let mut cells = Vec::new();
    for &w in &spec.windows {
        for &c in &spec.channels {
            for &k in &spec.kinds {
                cells.push((w, c, k));
            }
        }
    }
    let jobs: Vec<(usize, u64)> =
        (0..cells.len()).flat_map(|i| (0..spec.n_seeds as u64).map(move |s| (i, s))).collect();
    let results: Vec<Metrics> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let (window_s, eeg_channels, kind) = cells[i];
            let arch = ArchConfig { window_s, eeg_channels, ..base_arch.clone() };
            let run_tc = TrainConfig { model: kind, ..tc.clone() };
            let splits = prepare_splits(trials, &arch, preprocess, tc.val_ratio, seed)?;
            Ok(train_run(&arch, &run_tc, adm, 32, &splits, seed)?.test)
        })
        .collect::<Result<_>>()?;
    Ok(cells
        .iter()
        .enumerate()
        .map(|(i, &(window_s, channels, kind))| {
            let runs = &results[i * spec.n_seeds..(i + 1) * spec.n_seeds];
            let n = runs.len() as f64;
            CellResult {
                window_s,
                channels,
                kind,
                n_seeds: runs.len(),
                mean_accuracy: runs.iter().map(|m| m.accuracy).sum::<f64>() / n,
                mean_f1: runs.iter().map(|m| m.f1).sum::<f64>() / n,
            }
        })
        .collect())
}

/// One row per cell: `cell, mean accuracy, mean F1, n_seeds`.
pub fn matrix_table(cells: &[CellResult]) -> String {
    let mut out = format!("{:<24} {:>9} {:>9} {:>7}\n", "cell", "accuracy", "f1", "seeds");
    for c in cells {
        let name = format!("{}s/{}ch/{}", c.window_s, c.channels, c.kind);
        let _ = writeln!(out, "{name:<24} {:>9.4} {:>9.4} {:>7}", c.mean_accuracy, c.mean_f1, c.n_seeds);
    }
    out
}

/// The same table as TOML, one `[[cell]]` per row.
pub fn matrix_toml(cells: &[CellResult]) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        cell: &'a [CellResult],
    }
    toml::to_string(&Doc { cell: cells }).expect("matrix serializes")
}
