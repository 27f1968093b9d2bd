//! Model assembly, two-phase training, quantization, evaluation and
//! footprint accounting.

mod arch;
mod checkpoint;
mod metrics;
mod models;
mod quant;
mod session;
mod train;

pub use arch::{count_params, footprint_report, reduction_pct, ArchConfig, FootprintReport, ModelKind};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, LifManifest, TensorEntry, MANIFEST_NAME};
pub use metrics::{evaluate_predictions, Confusion, Metrics};
pub use models::{argmax_label, CnnClassifier, CnnGrads, HybridModel, Inference, Model, NamedTensor, ReferenceCnn};
pub use quant::QuantizedTensor;
pub use session::{
    channel_subset, evaluate, matrix_table, matrix_toml, prepare_splits, quantize_weights, run_experiment_matrix,
    train_run, CellResult, MatrixSpec, QuantizedModel, RunOutcome, Splits,
};
pub use train::{
    accuracy_of, lambda_sweep, train_phase_a, train_phase_b, train_reference, AdmObjective, AdmSettings, LambdaSweep,
    PhaseBResult, TrainConfig, TrainLog,
};

/// Caps the global rayon pool from `CORTICOSPIKE_THREADS` when it is set.
pub fn init_thread_pool_from_env() -> crate::Result<()> {
    let Ok(value) = std::env::var("CORTICOSPIKE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| crate::Error::Config(format!("CORTICOSPIKE_THREADS must be a positive integer, got {value:?}")))?;
    // A pool that already exists keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
