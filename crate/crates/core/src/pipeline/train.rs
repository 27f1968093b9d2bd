use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::{ArchConfig, ModelKind};
use super::models::{CnnClassifier, HybridModel};
use crate::adm::{
    adm_encode, concat_on_off, default_candidates, event_rate, grid_search_threshold, proxy_score, AdmConfig,
    GridReport, ThresholdScore,
};
use crate::dataset::{Label, Sample};
use crate::error::{Error, Result};
use crate::neural::{AdamConfig, AdamState, BnMode};
use crate::snn::{train_snn, EventSample, LifParams, SnnTrainConfig, SoftLifConfig, SpikingNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Required by every training entry point that reads a config file.
    pub seed: Option<u64>,
    pub model: ModelKind,
    /// Run the L1 sweep before training the reference CNN.
    pub lambda_sweep: bool,
    pub epochs_a: usize,
    pub epochs_b: usize,
    pub epochs_reference: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub val_ratio: f64,
    /// Stop after this many epochs without a better validation accuracy.
    pub patience: Option<usize>,
    /// Average the spiking-layer loss over all steps instead of the last.
    pub per_step_loss: bool,
    pub lambda_l1: f64,
    /// Soft-LIF activation scale (seconds) used while training the spiking
    /// layers.
    pub soft_amplitude: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: None,
            model: ModelKind::Hybrid,
            lambda_sweep: false,
            epochs_a: 50,
            epochs_b: 100,
            epochs_reference: 200,
            batch_size: 32,
            lr: 1e-3,
            val_ratio: 0.2,
            patience: None,
            per_step_loss: true,
            lambda_l1: 0.0,
            soft_amplitude: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("train.lr must be positive, got {}", self.lr)));
        }
        if !(self.val_ratio > 0.0 && self.val_ratio < 1.0) {
            return Err(Error::Config(format!("train.val_ratio must lie in (0, 1), got {}", self.val_ratio)));
        }
        if !(self.lambda_l1 >= 0.0 && self.lambda_l1.is_finite()) {
            return Err(Error::Config(format!("train.lambda_l1 must be non-negative, got {}", self.lambda_l1)));
        }
        if !(self.soft_amplitude > 0.0 && self.soft_amplitude.is_finite()) {
            return Err(Error::Config(format!("train.soft_amplitude must be positive, got {}", self.soft_amplitude)));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdmObjective {
    /// Validation accuracy of a short spiking-layer run per candidate.
    Validation,
    /// Whether the event rate falls in the sparse band.
    EventRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmSettings {
    /// Fixed threshold; skips the search when set.
    pub threshold: Option<f64>,
    pub candidates: Vec<f64>,
    pub objective: AdmObjective,
    /// Spiking-layer epochs per candidate under the validation objective.
    pub search_epochs: usize,
}

impl Default for AdmSettings {
    fn default() -> Self {
        Self { threshold: None, candidates: default_candidates(), objective: AdmObjective::Validation, search_epochs: 10 }
    }
}

impl AdmSettings {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.threshold {
            AdmConfig::new(t).map_err(|_| Error::Config(format!("adm.threshold must be positive, got {t}")))?;
        } else if self.candidates.is_empty() {
            return Err(Error::Config("adm.candidates must not be empty".into()));
        }
        if let Some(t) = self.candidates.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Config(format!("adm.candidates must be positive, got {t}")));
        }
        Ok(())
    }
}

/// Deterministic human-readable training log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainLog {
    pub lines: Vec<String>,
}

impl TrainLog {
    pub fn push(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.lines.extend(other.lines);
    }

    pub fn text(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

pub fn accuracy_of(predict: impl Fn(ArrayView2<'_, f32>) -> Result<Label> + Sync, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::param("accuracy of an empty sample set"));
    }
    let hits: Vec<bool> =
        samples.par_iter().map(|s| predict(s.input().view()).map(|p| p == s.label)).collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / samples.len() as f64)
}

fn check_sets(train: &[Sample], val: &[Sample]) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::DegenerateInput(format!(
            "training needs non-empty train and validation sets (got {} and {})",
            train.len(),
            val.len()
        )));
    }
    Ok(())
}

/// End-to-end ADAM training of a CNN classifier with best-validation
/// checkpointing (earliest epoch on ties).
#[allow(clippy::too_many_arguments)]
fn train_cnn(
    mut model: CnnClassifier<f32>,
    tc: &TrainConfig,
    epochs: usize,
    lambda: f64,
    train: &[Sample],
    val: &[Sample],
    rng: &mut ChaCha8Rng,
    tag: &str,
    log: &mut TrainLog,
) -> Result<(CnnClassifier<f32>, f64)> {
    check_sets(train, val)?;
    let mut final_train_acc = 0.0;
    let mut adam = AdamState::<f32>::new(tc.adam());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, usize, CnnClassifier<f32>)> = None;
    for epoch in 0..epochs {
        if let Some(bn) = &mut model.bn {
            bn.mode = BnMode::Train;
        }
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let xs: Vec<_> = batch.iter().map(|&i| train[i].input().view()).collect();
            let labels: Vec<Label> = batch.iter().map(|&i| train[i].label).collect();
            let (loss, grads) = model.batch_grads(&xs, &labels, lambda as f32)?;
            loss_sum += loss as f64 * batch.len() as f64;
            adam.step(&mut model.params_mut(), &grads.views())?;
        }
        if let Some(bn) = &mut model.bn {
            bn.mode = BnMode::Eval;
        }
        let train_acc = accuracy_of(|x| model.predict(x), train)?;
        let val_acc = accuracy_of(|x| model.predict(x), val)?;
        final_train_acc = train_acc;
        log.push(format!(
            "{tag} epoch {epoch:>3} loss {:.6} train_acc {train_acc:.4} val_acc {val_acc:.4}",
            loss_sum / train.len() as f64
        ));
        if best.as_ref().is_none_or(|(b, _, _)| val_acc > *b) {
            best = Some((val_acc, epoch, model.clone()));
        }
        let best_epoch = best.as_ref().unwrap().1;
        if tc.patience.is_some_and(|p| epoch - best_epoch >= p) {
            break;
        }
    }
    let (acc, epoch, model) = best.ok_or_else(|| Error::param(format!("{tag}: zero training epochs")))?;
    log.push(format!("{tag} best epoch {epoch} val_acc {acc:.4}"));
    Ok((model, final_train_acc))
}

/// Phase A: conv, batch norm and a dense head trained end to end. The head
/// is discarded by the caller; batch norm comes back in eval mode.
pub fn train_phase_a(
    cfg: &ArchConfig,
    tc: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
    seed: u64,
    log: &mut TrainLog,
) -> Result<CnnClassifier<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = CnnClassifier::init(cfg, true, &mut rng);
    Ok(train_cnn(model, tc, tc.epochs_a, 0.0, train, val, &mut rng, "phase-a", log)?.0)
}

/// Reference CNN without batch norm, optionally with the L1 penalty.
pub fn train_reference(
    cfg: &ArchConfig,
    tc: &TrainConfig,
    lambda_l1: f64,
    train: &[Sample],
    val: &[Sample],
    seed: u64,
    log: &mut TrainLog,
) -> Result<CnnClassifier<f32>> {
    if !(lambda_l1 >= 0.0 && lambda_l1.is_finite()) {
        return Err(Error::param(format!("lambda_l1 must be non-negative, got {lambda_l1}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = CnnClassifier::init(cfg, false, &mut rng);
    Ok(train_cnn(model, tc, tc.epochs_reference, lambda_l1, train, val, &mut rng, "reference", log)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSweep {
    /// `(lambda, final-epoch training accuracy)` per step.
    pub points: Vec<(f64, f64)>,
    pub chosen: f64,
}

/// Doubles lambda from 1e-6 up to 0.1 and keeps the largest value whose
/// final-epoch training accuracy stays above 60%. Zero if none does.
pub fn lambda_sweep(
    cfg: &ArchConfig,
    tc: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
    seed: u64,
    log: &mut TrainLog,
) -> Result<LambdaSweep> {
    let mut points = Vec::new();
    let mut chosen = 0.0;
    let mut lambda = 1e-6;
    while lambda <= 0.1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = CnnClassifier::init(cfg, false, &mut rng);
        let no_patience = TrainConfig { patience: None, ..tc.clone() };
        let tag = format!("sweep {lambda:e}");
        let mut inner = TrainLog::default();
        let (_, final_acc) =
            train_cnn(model, &no_patience, tc.epochs_reference, lambda, train, val, &mut rng, &tag, &mut inner)?;
        log.push(format!("lambda-sweep lambda {lambda:e} final_train_acc {final_acc:.4}"));
        points.push((lambda, final_acc));
        if final_acc > 0.6 {
            chosen = lambda;
        }
        lambda *= 2.0;
    }
    log.push(format!("lambda-sweep chosen {chosen:e}"));
    Ok(LambdaSweep { points, chosen })
}

/// Per-sample normalized conv features of a frozen front end.
fn front_end_features(conv_bn: &HybridModel<f32>, samples: &[Sample]) -> Result<Vec<Array2<f32>>> {
    samples.par_iter().map(|s| conv_bn.features(s.input().view())).collect()
}

fn encode_all(features: &[Array2<f32>], labels: &[Label], threshold: f64) -> Result<(Vec<EventSample>, f64)> {
    let frames: Vec<_> =
        features.par_iter().map(|f| adm_encode(f.view(), threshold as f32)).collect::<Result<_>>()?;
    let all: Vec<_> = frames.iter().flatten().cloned().collect();
    let rate = event_rate(&all)?;
    let samples = frames
        .iter()
        .zip(labels)
        .map(|(fr, &label)| EventSample { steps: fr.iter().map(concat_on_off).collect(), label })
        .collect();
    Ok((samples, rate))
}

pub struct PhaseBResult {
    pub model: HybridModel<f32>,
    pub grid: Option<GridReport>,
    /// Mean ADM event rate on the training set at the chosen threshold.
    pub event_rate: f64,
}

/// Phase B: freezes conv and batch norm, chooses the ADM threshold and trains
/// the spiking layers on the precomputed events.
#[allow(clippy::too_many_arguments)]
pub fn train_phase_b(
    phase_a: &CnnClassifier<f32>,
    cfg: &ArchConfig,
    tc: &TrainConfig,
    adm: &AdmSettings,
    train: &[Sample],
    val: &[Sample],
    seed: u64,
    log: &mut TrainLog,
) -> Result<PhaseBResult> {
    check_sets(train, val)?;
    let bn = phase_a.bn.clone().ok_or_else(|| Error::param("phase B needs a front end with batch norm"))?;
    let lif = LifParams::for_stride(cfg.stride);
    let mut model = HybridModel::from_front_end(phase_a.conv.clone(), bn, AdmConfig::new(1.0)?, lif);
    let train_features = front_end_features(&model, train)?;
    let val_features = front_end_features(&model, val)?;
    let train_labels: Vec<Label> = train.iter().map(|s| s.label).collect();
    let val_labels: Vec<Label> = val.iter().map(|s| s.label).collect();
    let (n_in, n_hidden, _) = cfg.snn_dims();

    let snn_cfg = |epochs: usize| SnnTrainConfig {
        epochs,
        batch_size: tc.batch_size,
        adam: tc.adam(),
        seed,
        per_step_loss: tc.per_step_loss,
        patience: tc.patience,
        soft: Some(SoftLifConfig { amplitude: tc.soft_amplitude, ..SoftLifConfig::for_lif(&lif) }),
    };
    let fresh = || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpikingNetwork::<f32>::init(n_in, n_hidden, lif, &mut rng)
    };

    let (threshold, grid) = match adm.threshold {
        Some(t) => (t, None),
        None => {
            let report = grid_search_threshold(&adm.candidates, |t| {
                let (ev_train, rate) = encode_all(&train_features, &train_labels, t)?;
                let score = match adm.objective {
                    AdmObjective::EventRate => proxy_score(rate),
                    AdmObjective::Validation => {
                        let (ev_val, _) = encode_all(&val_features, &val_labels, t)?;
                        let r = train_snn(fresh(), &ev_train, Some(&ev_val), &snn_cfg(adm.search_epochs))?;
                        r.history[r.best_epoch].val_accuracy.unwrap_or(0.0)
                    }
                };
                Ok(ThresholdScore { score, event_rate: rate })
            })?;
            for p in &report.points {
                log.push(format!("adm-search threshold {:.2} score {:.4} event_rate {:.4}", p.threshold, p.score, p.event_rate));
            }
            (report.best, Some(report))
        }
    };
    log.push(format!("adm threshold {threshold:.2}"));
    model.adm = AdmConfig::new(threshold)?;

    let (ev_train, rate) = encode_all(&train_features, &train_labels, threshold)?;
    let (ev_val, _) = encode_all(&val_features, &val_labels, threshold)?;
    let report = train_snn(fresh(), &ev_train, Some(&ev_val), &snn_cfg(tc.epochs_b))?;
    for e in &report.history {
        log.push(format!(
            "phase-b epoch {:>3} loss {:.6} train_acc {:.4} val_acc {:.4}",
            e.epoch,
            e.loss,
            e.train_accuracy,
            e.val_accuracy.unwrap_or(0.0)
        ));
    }
    log.push(format!(
        "phase-b best epoch {} val_acc {:.4}",
        report.best_epoch,
        report.history[report.best_epoch].val_accuracy.unwrap_or(0.0)
    ));
    model.snn = report.network;
    Ok(PhaseBResult { model, grid, event_rate: rate })
}
