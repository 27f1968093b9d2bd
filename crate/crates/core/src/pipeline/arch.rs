use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::EEG_FS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Hybrid,
    Reference,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Hybrid, ModelKind::Reference];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hybrid => "hybrid",
            ModelKind::Reference => "reference",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(ModelKind::Hybrid),
            "reference" => Ok(ModelKind::Reference),
            other => Err(Error::Config(format!("unknown model kind {other:?} (expected hybrid or reference)"))),
        }
    }
}

/// Shape of both architectures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub eeg_channels: usize,
    pub conv_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub window_s: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { eeg_channels: 8, conv_out: 40, kernel: 64, stride: 64, window_s: 1.0 }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.eeg_channels, 8 | 16) {
            return Err(Error::Config(format!("arch.eeg_channels must be 8 or 16, got {}", self.eeg_channels)));
        }
        if self.conv_out == 0 {
            return Err(Error::Config("arch.conv_out must be positive".into()));
        }
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Config("arch.kernel and arch.stride must be positive".into()));
        }
        if !(1.0..=5.0).contains(&self.window_s) || self.window_s.fract() != 0.0 {
            return Err(Error::Config(format!("arch.window_s must be a whole number in 1..=5, got {}", self.window_s)));
        }
        if self.window_samples() < self.kernel {
            return Err(Error::Config(format!(
                "arch.kernel ({}) is longer than the {} s window",
                self.kernel, self.window_s
            )));
        }
        Ok(())
    }

    /// EEG rows plus the two envelopes.
    pub fn input_channels(&self) -> usize {
        self.eeg_channels + 2
    }

    pub fn window_samples(&self) -> usize {
        (self.window_s * EEG_FS).round() as usize
    }

    /// Conv output columns per window, which is also the number of SNN steps.
    pub fn steps(&self) -> usize {
        (self.window_samples() - self.kernel) / self.stride + 1
    }

    pub fn snn_dims(&self) -> (usize, usize, usize) {
        (2 * self.conv_out, 2 * self.conv_out, 2)
    }

    pub fn head_dims(&self) -> (usize, usize, usize) {
        (self.conv_out, self.conv_out, 2)
    }

    /// SNN step length in seconds.
    pub fn snn_dt(&self) -> f64 {
        self.stride as f64 / EEG_FS
    }
}

/// Learnable scalars of the deployed model, batch-norm statistics included.
pub fn count_params(cfg: &ArchConfig, kind: ModelKind) -> usize {
    let k = cfg.conv_out;
    let conv = cfg.input_channels() * cfg.kernel * k + k;
    match kind {
        ModelKind::Hybrid => {
            let (i, h, o) = cfg.snn_dims();
            conv + 4 * k + (h * i + h) + (o * h + o)
        }
        ModelKind::Reference => {
            let (i, h, o) = cfg.head_dims();
            conv + (h * i + h) + (o * h + o)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootprintReport {
    pub kind: ModelKind,
    pub params: usize,
    pub bits: u32,
    pub bytes: usize,
    pub conv_macs: usize,
    /// Mean weight-column accumulations per window, when measured.
    pub synaptic_events: Option<f64>,
    /// Mean ADM event rate, when measured.
    pub event_sparsity: Option<f64>,
}

impl FootprintReport {
    pub fn with_measurements(mut self, synaptic_events: f64, event_rate: f64) -> Self {
        self.synaptic_events = Some(synaptic_events);
        self.event_sparsity = Some(event_rate);
        self
    }
}

pub fn footprint_report(cfg: &ArchConfig, kind: ModelKind, bits: u32) -> FootprintReport {
    let params = count_params(cfg, kind);
    FootprintReport {
        kind,
        params,
        bits,
        bytes: params * bits as usize / 8,
        conv_macs: cfg.input_channels() * cfg.kernel * cfg.conv_out * cfg.steps(),
        synaptic_events: None,
        event_sparsity: None,
    }
}

/// Percentage by which `new` is smaller than `old`.
pub fn reduction_pct(new: usize, old: usize) -> f64 {
    if old == 0 {
        return 0.0;
    }
    100.0 * (1.0 - new as f64 / old as f64)
}
