//! Hybrid CNN-SNN auditory attention decoding.
//!
//! The pipeline takes multichannel EEG plus the speech envelopes of two
//! competing speakers and decides which speaker the listener attends to:
//!
//! - [`signal`]: FIR bandpass, 60 Hz notch, Hilbert envelope, resampling.
//! - [`dataset`]: synthetic cocktail-party trials, the `AADT` tensor format,
//!   manifests, channel selection, windowing and splits.
//! - [`neural`]: conv / batch-norm / dense layers with hand-written backward
//!   passes, cross-entropy, L1 penalty and ADAM.
//! - [`adm`]: asynchronous delta modulator turning conv output into ON/OFF events.
//! - [`snn`]: LIF dynamics, the soft-LIF training surrogate and event-driven
//!   spiking dense layers.
//! - [`pipeline`]: model assembly, two-phase training, quantization, metrics,
//!   footprint accounting and the experiment matrix.
//! - [`config`]: the TOML run configuration shared by the CLI.

pub mod adm;
pub mod config;
pub mod dataset;
pub mod error;
pub mod neural;
pub mod pipeline;
pub mod real;
pub mod signal;
pub mod snn;

pub use error::{Error, Result};
pub use real::Real;
