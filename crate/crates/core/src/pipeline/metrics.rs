use crate::dataset::Label;
use crate::error::{Error, Result};

/// Two-class confusion counts, `counts[truth][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub counts: [[usize; 2]; 2],
}

impl Confusion {
    pub fn from_pairs(predicted: &[Label], truth: &[Label]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::shape(format!("{} predictions for {} labels", predicted.len(), truth.len())));
        }
        let mut counts = [[0; 2]; 2];
        for (p, t) in predicted.iter().zip(truth) {
            counts[t.index()][p.index()] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        self.counts[0][0] + self.counts[1][1]
    }

    /// F1 of one class, 0 when it is never predicted nor present.
    pub fn f1(&self, class: Label) -> f64 {
        let c = class.index();
        let tp = self.counts[c][c] as f64;
        let fp = self.counts[1 - c][c] as f64;
        let fn_ = self.counts[c][1 - c] as f64;
        let denom = 2.0 * tp + fp + fn_;
        if denom == 0.0 {
            0.0
        } else {
            2.0 * tp / denom
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    /// Macro average of the two per-class F1 scores.
    pub f1: f64,
    pub confusion: Confusion,
}

pub fn evaluate_predictions(predicted: &[Label], truth: &[Label]) -> Result<Metrics> {
    if truth.is_empty() {
        return Err(Error::param("cannot evaluate an empty test set"));
    }
    let confusion = Confusion::from_pairs(predicted, truth)?;
    let accuracy = confusion.correct() as f64 / confusion.total() as f64;
    let f1 = (confusion.f1(Label::F) + confusion.f1(Label::M)) / 2.0;
    Ok(Metrics { accuracy, f1, confusion })
}
