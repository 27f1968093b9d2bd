use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::{s, Array2};

use corticospike::adm::frames_to_raster;
use corticospike::config::RunConfig;
use corticospike::dataset::{read_tensor, save_trials, window_samples, write_tensor, SessionKind, Tensor, Trial};
use corticospike::pipeline::{
    channel_subset, footprint_report, init_thread_pool_from_env, load_checkpoint, matrix_table, matrix_toml, prepare_splits,
    reduction_pct, run_experiment_matrix, save_checkpoint, train_run, ArchConfig, FootprintReport, MatrixSpec, Model,
    ModelKind,
};

#[derive(Parser)]
#[command(name = "corticospike", version, about = "Hybrid CNN-SNN auditory attention decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic session (tensor files plus manifest.toml).
    Synth(SynthArgs),
    /// Train a model and write its checkpoint and metrics log.
    Train(TrainArgs),
    /// Compare memory footprints and time inference.
    Bench(BenchArgs),
    /// Classify one sample with a trained checkpoint.
    Infer(InferArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = Some(seed);
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output directory for the checkpoint and metrics.log.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Sweep the L1 weight before training the reference CNN.
    #[arg(long)]
    lambda_sweep: bool,
    /// Run the window x channel x model experiment matrix instead.
    #[arg(long)]
    matrix: bool,
    /// Seeds per matrix cell.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Checkpoints to measure: the first is the candidate, the second the
    /// baseline. Missing ones are derived from the configuration.
    checkpoints: Vec<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Stacked input tensor: female envelope, EEG rows, male envelope.
    sample: PathBuf,
    /// Write ADM events, hidden spikes and output spikes as an i16 tensor.
    #[arg(long)]
    raster: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_thread_pool_from_env().map_err(anyhow::Error::from).and_then(|()| match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Bench(a) => bench(a),
        Command::Infer(a) => infer(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e.chain().any(|c| c.downcast_ref::<corticospike::Error>().is_some_and(|e| e.is_numerical()));
    if numerical {
        3
    } else {
        2
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = a.cfg.load()?;
    if let Some(seed) = cfg.train.seed {
        cfg.data.synthetic.seed = seed;
    }
    if cfg.data.manifest.is_some() {
        bail!("synth writes synthetic data; remove data.manifest from the config");
    }
    let trials = cfg.trials()?;
    let manifest = save_trials(&a.out, &trials)?;
    println!("wrote {} trials to {}", trials.len(), manifest.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.cfg.load()?;
    if a.lambda_sweep {
        cfg.train.lambda_sweep = true;
    }
    let seed = cfg.require_seed()?;
    let trials = cfg.trials().context("loading trials")?;

    if a.matrix {
        let available = trials.first().map_or(0, |t| t.n_channels());
        let spec = MatrixSpec {
            channels: MatrixSpec::default().channels.into_iter().filter(|&c| c <= available).collect(),
            n_seeds: a.seeds,
            ..MatrixSpec::default()
        };
        let cells = run_experiment_matrix(&trials, &cfg.arch, &cfg.train, &cfg.adm, cfg.data.preprocess.as_ref(), &spec)?;
        std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
        write_file(&a.out.join("matrix.toml"), &matrix_toml(&cells))?;
        print!("{}", matrix_table(&cells));
        return Ok(());
    }

    let splits = prepare_splits(&trials, &cfg.arch, cfg.data.preprocess.as_ref(), cfg.train.val_ratio, seed)?;
    let outcome = train_run(&cfg.arch, &cfg.train, &cfg.adm, cfg.quant.bits, &splits, seed)?;
    save_checkpoint(&a.out, &cfg.arch, &outcome.model, outcome.quantized.as_ref())?;
    let log = outcome.log.text();
    write_file(&a.out.join("metrics.log"), &log)?;
    write_file(&a.out.join("config.toml"), &cfg.to_toml())?;
    print!("{log}");
    Ok(())
}

struct Measured {
    report: FootprintReport,
    latency_ms: Option<f64>,
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.checkpoints.len() > 2 {
        bail!("bench takes at most two checkpoints (candidate, baseline)");
    }
    let cfg = a.cfg.load()?;
    let windows = if a.checkpoints.is_empty() { Vec::new() } else { bench_windows(&cfg)? };

    let candidate = match a.checkpoints.first() {
        Some(p) => measure(p, &windows)?,
        None => Measured { report: footprint_report(&cfg.arch, cfg.train.model, cfg.quant.bits), latency_ms: None },
    };
    let baseline = match a.checkpoints.get(1) {
        Some(p) => measure(p, &windows)?,
        None => {
            let arch = ArchConfig { conv_out: ArchConfig::default().conv_out, ..cfg.arch.clone() };
            Measured { report: footprint_report(&arch, ModelKind::Reference, 32), latency_ms: None }
        }
    };

    println!("{:<10} {:<10} {:>8} {:>5} {:>9} {:>10} {:>12}", "role", "model", "params", "bits", "bytes", "conv_macs", "latency_ms");
    for (role, m) in [("candidate", &candidate), ("baseline", &baseline)] {
        let r = &m.report;
        let latency = m.latency_ms.map_or("-".to_string(), |l| format!("{l:.3}"));
        println!(
            "{role:<10} {:<10} {:>8} {:>5} {:>9} {:>10} {:>12}",
            r.kind.name(),
            r.params,
            r.bits,
            r.bytes,
            r.conv_macs,
            latency
        );
    }
    println!("byte footprint reduction: {:.1}%", reduction_pct(candidate.report.bytes, baseline.report.bytes));
    println!("parameter reduction: {:.2}%", reduction_pct(candidate.report.params, baseline.report.params));
    for (role, m) in [("candidate", &candidate), ("baseline", &baseline)] {
        if let (Some(rate), Some(syn)) = (m.report.event_sparsity, m.report.synaptic_events) {
            println!("{role} event sparsity: {:.2}% of ADM slots silent (event rate {rate:.4}), {syn:.1} synaptic events per window", 100.0 * (1.0 - rate));
        }
    }
    Ok(())
}

/// Online trials of the configured data, or every trial when none is online.
fn bench_windows(cfg: &RunConfig) -> Result<Vec<Trial>> {
    let trials = cfg.trials().context("loading trials for timing")?;
    let online: Vec<_> =
        trials.iter().filter(|t| t.session == SessionKind::Online).cloned().collect();
    Ok(if online.is_empty() { trials } else { online })
}

fn measure(path: &Path, trials: &[Trial]) -> Result<Measured> {
    let (model, manifest) = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let arch = &manifest.arch;
    let subset: Vec<_> = trials.iter().map(|t| channel_subset(t, arch.eeg_channels)).collect::<Result<_, _>>()?;
    let windows = window_samples(&subset, arch.window_s)?;
    let mut report = footprint_report(arch, model.kind(), manifest.bits);
    let start = Instant::now();
    let mut events = 0usize;
    let mut slots = 0usize;
    let mut synaptic = 0usize;
    for w in &windows {
        match &model {
            Model::Hybrid(h) => {
                let out = h.infer(w.input().view())?;
                synaptic += out.synaptic_events();
                events += out.frames.iter().map(|f| f.event_count()).sum::<usize>();
                slots += out.frames.iter().map(|f| 2 * f.channels()).sum::<usize>();
            }
            Model::Reference(r) => {
                r.predict(w.input().view())?;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let n = windows.len().max(1) as f64;
    if matches!(model, Model::Hybrid(_)) && slots > 0 {
        report = report.with_measurements(synaptic as f64 / n, events as f64 / slots as f64);
    }
    Ok(Measured { report, latency_ms: Some(1e3 * elapsed / n) })
}

fn infer(a: InferArgs) -> Result<()> {
    let (model, manifest) =
        load_checkpoint(&a.checkpoint).with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    let input = read_tensor(&a.sample)
        .and_then(|t| t.to_array2())
        .with_context(|| format!("reading sample {}", a.sample.display()))?;
    let input = first_window(input, &manifest.arch)?;
    match &model {
        Model::Hybrid(h) => {
            let out = h.infer(input.view())?;
            println!("step class v0 v1 adm_events hidden_spikes");
            for (st, fr) in out.trace.iter().zip(&out.frames) {
                println!(
                    "{} {} {:.4} {:.4} {} {}",
                    st.step,
                    st.class,
                    st.voltages[0],
                    st.voltages[1],
                    fr.event_count(),
                    st.hidden_spikes.iter().filter(|&&s| s).count()
                );
            }
            if let Some(path) = &a.raster {
                write_tensor(path, &raster(&out)?)?;
                eprintln!("raster written to {}", path.display());
            }
            println!("prediction {}", out.class);
        }
        Model::Reference(r) => {
            if a.raster.is_some() {
                bail!("--raster needs a hybrid checkpoint");
            }
            println!("prediction {}", r.predict(input.view())?);
        }
    }
    Ok(())
}

fn first_window(input: Array2<f32>, arch: &ArchConfig) -> Result<Array2<f32>> {
    if input.nrows() != arch.input_channels() {
        bail!(
            "sample has {} rows; the checkpoint expects {} ({} EEG channels plus two envelopes)",
            input.nrows(),
            arch.input_channels(),
            arch.eeg_channels
        );
    }
    let len = arch.window_samples();
    if input.ncols() < len {
        bail!("sample has {} samples; the checkpoint's window needs {len}", input.ncols());
    }
    if input.ncols() > len {
        eprintln!("using the first {len} of {} samples", input.ncols());
    }
    Ok(input.slice(s![.., ..len]).to_owned())
}

/// Rows: ADM ON, ADM OFF, hidden spikes, output spikes; one column per step.
fn raster(out: &corticospike::pipeline::Inference<f32>) -> Result<Tensor> {
    let adm = frames_to_raster(&out.frames)?;
    let adm = adm.as_i16().expect("rasters are i16");
    let steps = out.trace.len();
    let adm_rows = adm.len() / steps.max(1);
    let hidden = out.trace.first().map_or(0, |s| s.hidden_spikes.len());
    let output = out.trace.first().map_or(0, |s| s.output_spikes.len());
    let rows = adm_rows + hidden + output;
    let mut values = vec![0i16; rows * steps];
    values[..adm.len()].copy_from_slice(adm);
    for (t, st) in out.trace.iter().enumerate() {
        for (i, &s) in st.hidden_spikes.iter().chain(&st.output_spikes).enumerate() {
            values[(adm_rows + i) * steps + t] = s as i16;
        }
    }
    Ok(Tensor::from_i16(vec![rows, steps], values)?)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
