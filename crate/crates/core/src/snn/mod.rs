//! Leaky integrate-and-fire layers, the soft-LIF training surrogate and the
//! two-layer spiking classifier.

mod layer;
mod lif;
mod network;
mod soft_lif;
mod train;

pub use layer::SpikingDense;
pub use lif::{analytic_lif_rate, lif_step, LifLayerState, LifParams, LifStep};
pub use network::{classify_step, snn_forward_sequence, SequenceOutput, SpikingNetwork, StepTrace};
pub use soft_lif::{soft_lif_rate, SoftLifConfig};
pub use train::{spiking_accuracy, train_snn, EpochStats, EventSample, SnnTrainConfig, SnnTrainReport};
