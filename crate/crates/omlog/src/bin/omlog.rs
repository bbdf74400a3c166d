//! File-oriented CLI for the detection pipeline.
//!
//! Subcommands: `parse`, `train`, `stream`, `sweep`, `analyze`, `synth`.
//! Every subcommand writes a `manifest.conf` into its output directory;
//! re-running the same subcommand with `--config manifest.conf` reproduces
//! the outputs bit-for-bit apart from timings.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use omlog::analysis;
use omlog::config::{Mode, RunConfig};
use omlog::corpus::{self, DatasetKind};
use omlog::dataset::load_dataset;
use omlog::detectors::{NextEventModel, NormalityModel};
use omlog::drift::{DistributionSnapshot, MmdConfig};
use omlog::error::{Error, Result};
use omlog::features::load_embedding_file;
use omlog::neural::{read_checkpoint, write_checkpoint};
use omlog::pipeline::{run_stream, sweep, train_models, TrainedModels};
use omlog::synth::{synthesize, write_generic_log, write_shift_points, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "omlog",
    version,
    about = "Online log anomaly detection with shift-aware routing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat key-value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (or set OMLOG_OUT).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a raw log into the columnar record file and template catalog.
    Parse {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Generate a synthetic regime-shift log.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the detection models on the normal prefix of a log.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        input: PathBuf,
        /// HDFS-style per-session label file.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Optional precomputed event-embedding file.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        train_ratio: Option<f64>,
    },
    /// Stream the test portion through a detection mode.
    Stream {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Directory holding the checkpoints written by `train`.
        #[arg(long)]
        train_dir: PathBuf,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        train_ratio: Option<f64>,
    },
    /// Run a grid of epsilon scales and task counts.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        train_dir: PathBuf,
        /// Comma-separated epsilon multipliers, e.g. 0.5,1,2.
        #[arg(long, value_delimiter = ',')]
        epsilon_grid: Vec<f64>,
        /// Comma-separated meta-task counts, e.g. 2,10.
        #[arg(long, value_delimiter = ',')]
        tasks_grid: Vec<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        train_ratio: Option<f64>,
    },
    /// Batch similarity study and shift census over a log.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Census stability threshold on the MMD value.
        #[arg(long, default_value_t = 0.001)]
        census_threshold: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn load_config(common: &CommonArgs, dataset: Option<&String>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(kind) = dataset {
        cfg.dataset.kind = DatasetKind::parse_name(kind)?;
    }
    Ok(cfg)
}

fn out_dir(common: &CommonArgs, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = std::env::var_os("OMLOG_OUT")
        .map(PathBuf::from)
        .or_else(|| common.out.clone())
        .or_else(|| cfg.run.out_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            Error::config("no output directory: pass --out, set OMLOG_OUT, or set [run] out_dir")
        })?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Parse {
            common,
            dataset,
            input,
        } => {
            let cfg = load_config(&common, dataset.as_ref())?;
            let dir = out_dir(&common, &cfg)?;
            let parsed = corpus::parse_log_file(&input, cfg.dataset.kind, &cfg.parser)?;
            corpus::store::write_records(&dir.join("records.tsv"), &parsed)?;
            corpus::store::write_templates(&dir.join("templates.tsv"), &parsed.vocab)?;
            cfg.write_manifest(&dir, "parse")?;
            println!(
                "parsed {} records into {} templates ({} quarantined, {} timestamp regressions)",
                parsed.records.len(),
                parsed.vocab.len(),
                parsed.stats.quarantined,
                parsed.stats.timestamp_regressions
            );
            Ok(())
        }
        Command::Synth { common } => {
            let cfg = load_config(&common, None)?;
            let dir = out_dir(&common, &cfg)?;
            let mut spec = synth_spec(&cfg)?;
            if let Some(seed) = common.seed {
                spec.seed = seed;
            }
            let stream = synthesize(&spec)?;
            write_generic_log(&dir.join("raw.log"), &stream)?;
            write_shift_points(&dir.join("shifts.tsv"), &stream)?;
            cfg.write_manifest(&dir, "synth")?;
            let abnormal = stream.samples.iter().filter(|s| s.is_abnormal()).count();
            println!(
                "synthesized {} samples ({} abnormal) with {} regime shifts into {}",
                stream.samples.len(),
                abnormal,
                stream.shift_points.len(),
                dir.display()
            );
            Ok(())
        }
        Command::Train {
            common,
            dataset,
            input,
            labels,
            embeddings,
            train_ratio,
        } => {
            let mut cfg = load_config(&common, dataset.as_ref())?;
            if let Some(r) = train_ratio {
                cfg.dataset.train_ratio = r;
            }
            let dir = out_dir(&common, &cfg)?;
            let loaded = load_dataset(&input, labels.as_deref(), &cfg)?;
            let split = corpus::split_train_test(loaded.samples, cfg.dataset.train_ratio)?;
            let mut models = train_models(&split.train, &cfg)?;
            if let Some(path) = embeddings {
                let rows = load_embedding_file(&path)?;
                models.detector.import_embeddings(&rows)?;
            }

            write_checkpoint(
                &dir.join("detector.ckpt"),
                &models.detector.manifest(),
                models.detector.store(),
            )?;
            write_checkpoint(
                &dir.join("normality.ckpt"),
                &models.normality.manifest(),
                models.normality.store(),
            )?;
            let calibration = format!(
                "[calibration]\nsigma = {:?}\nepsilon = {:?}\ntrain_seconds = {:?}\ndiscarded_abnormal_train = {}\n",
                models.mmd.sigma, models.mmd.epsilon, models.train_seconds, split.discarded_abnormal_train,
            );
            std::fs::write(dir.join("calibration.conf"), calibration)?;
            cfg.write_manifest(&dir, "train")?;
            println!(
                "trained on {} normal samples ({} abnormal discarded): vocab={} sigma={:.6} epsilon={:.6} best_epoch={}",
                split.train.len(),
                split.discarded_abnormal_train,
                models.detector.vocab_size(),
                models.mmd.sigma,
                models.mmd.epsilon,
                models.detector_log.best_epoch,
            );
            Ok(())
        }
        Command::Stream {
            common,
            dataset,
            input,
            labels,
            train_dir,
            mode,
            batch_size,
            train_ratio,
        } => {
            let mut cfg = load_config(&common, dataset.as_ref())?;
            if let Some(m) = mode {
                cfg.stream.mode = Mode::parse_name(&m)?;
            }
            if let Some(b) = batch_size {
                cfg.stream.batch_size = b;
            }
            if let Some(r) = train_ratio {
                cfg.dataset.train_ratio = r;
            }
            let dir = out_dir(&common, &cfg)?;
            let (models, split) = restore_models(&train_dir, &input, labels.as_deref(), &cfg)?;

            let mut report = run_stream(&models, &split.test, &cfg)?;
            report.counters.discarded_abnormal_train = split.discarded_abnormal_train as u64;
            report.write_json(&dir.join("report.json"))?;
            report.write_batches_csv(&dir.join("batches.csv"))?;
            report.write_meta_csv(&dir.join("meta.csv"))?;
            report.write_verdicts_csv(&dir.join("verdicts.csv"))?;
            cfg.write_manifest(&dir, "stream")?;
            println!(
                "mode={} batches={} online={} updates={} precision={:.4} recall={:.4} f1={:.4}",
                cfg.stream.mode.name(),
                report.batches.len(),
                report.online_routes,
                report.update_steps,
                report.metrics.precision,
                report.metrics.recall,
                report.metrics.f1,
            );
            Ok(())
        }
        Command::Sweep {
            common,
            dataset,
            input,
            labels,
            train_dir,
            epsilon_grid,
            tasks_grid,
            batch_size,
            train_ratio,
        } => {
            let mut cfg = load_config(&common, dataset.as_ref())?;
            if let Some(b) = batch_size {
                cfg.stream.batch_size = b;
            }
            if let Some(r) = train_ratio {
                cfg.dataset.train_ratio = r;
            }
            let dir = out_dir(&common, &cfg)?;
            let (models, split) = restore_models(&train_dir, &input, labels.as_deref(), &cfg)?;

            let scales = if epsilon_grid.is_empty() {
                vec![1.0]
            } else {
                epsilon_grid
            };
            let tasks = if tasks_grid.is_empty() {
                vec![cfg.episode.tasks_per_batch]
            } else {
                tasks_grid
            };
            let points = sweep(&models, &split.test, &cfg, &scales, &tasks)?;

            let mut table = String::from(
                "epsilon_scale,tasks_per_batch,f1,online_routes,update_steps,test_seconds\n",
            );
            for (i, (point, report)) in points.iter().enumerate() {
                table.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    point.epsilon_scale,
                    point.tasks_per_batch,
                    point.f1,
                    point.online_routes,
                    point.update_steps,
                    point.test_seconds
                ));
                report.write_json(&dir.join(format!("report_{i}.json")))?;
            }
            std::fs::write(dir.join("sweep.csv"), table)?;
            cfg.write_manifest(&dir, "sweep")?;
            println!("swept {} grid points into {}", points.len(), dir.display());
            Ok(())
        }
        Command::Analyze {
            common,
            dataset,
            input,
            labels,
            batch_size,
            census_threshold,
        } => {
            let mut cfg = load_config(&common, dataset.as_ref())?;
            if let Some(b) = batch_size {
                cfg.stream.batch_size = b;
            }
            let dir = out_dir(&common, &cfg)?;
            let loaded = load_dataset(&input, labels.as_deref(), &cfg)?;
            let vocab = loaded.vocab.len();
            let batches: Vec<Vec<corpus::Sample>> = loaded
                .samples
                .chunks(cfg.stream.batch_size.max(1))
                .map(<[corpus::Sample]>::to_vec)
                .collect();

            let sim_cfg = analysis::SimilarityConfig {
                seed: cfg.run.seed,
                ..Default::default()
            };
            let report = analysis::similarity_report(&batches, &sim_cfg)?;
            analysis::write_similarity_csv(&dir.join("similarity.csv"), &report)?;

            let snapshots: Vec<DistributionSnapshot> = batches
                .iter()
                .map(|b| DistributionSnapshot::from_samples(b, vocab))
                .collect();
            let sigma = match cfg.stream.sigma_override {
                Some(s) => s,
                None => omlog::drift::calibrate(&snapshots)
                    .map(|c| c.sigma)
                    .unwrap_or(1.0),
            };
            let census = analysis::shift_census(&batches, sigma, census_threshold, vocab)?;
            analysis::write_census_csv(&dir.join("census.csv"), &census)?;
            analysis::write_frequency_matrix(&dir.join("freqvecs.csv"), &loaded.samples, vocab)?;
            cfg.write_manifest(&dir, "analyze")?;
            println!(
                "{} batches: {} stable pairs of {} ({:.1}%), {} identical; sigma={:.6}",
                batches.len(),
                census.stable_pairs,
                census.mmd_values.len(),
                100.0 * census.stable_fraction(),
                census.identical_batches,
                sigma,
            );
            Ok(())
        }
    }
}

fn synth_spec(cfg: &RunConfig) -> Result<SyntheticSpec> {
    SyntheticSpec::from_scalars(
        cfg.synth.regimes,
        cfg.synth.alphabet_size,
        cfg.synth.branching,
        cfg.synth.duration,
        cfg.synth.sample_len,
        cfg.synth.anomaly_rate,
        cfg.synth.anomaly,
        cfg.synth.seed,
        cfg.synth.repeat_block,
        cfg.synth.repeat_fraction,
    )
}

/// Load the checkpoints written by `train` and re-derive the deterministic
/// split and calibration artifacts around them.
fn restore_models(
    train_dir: &Path,
    input: &Path,
    labels: Option<&Path>,
    cfg: &RunConfig,
) -> Result<(TrainedModels, corpus::TrainTestSplit)> {
    let detector_path = train_dir.join("detector.ckpt");
    if !detector_path.exists() {
        return Err(Error::data(format!(
            "no detector checkpoint at {} — run `omlog train` first",
            detector_path.display()
        )));
    }
    let detector = NextEventModel::from_checkpoint(&read_checkpoint(&detector_path)?)?;
    let normality =
        NormalityModel::from_checkpoint(&read_checkpoint(&train_dir.join("normality.ckpt"))?)?;

    let calibration_path = train_dir.join("calibration.conf");
    let text = std::fs::read_to_string(&calibration_path).map_err(|e| {
        Error::data(format!(
            "missing calibration at {}: {e}",
            calibration_path.display()
        ))
    })?;
    let mut sigma = None;
    let mut epsilon = None;
    let mut train_seconds = 0.0;
    for (section, key, value) in omlog::config::parse_flat(&text)? {
        if section == "calibration" {
            match key.as_str() {
                "sigma" => sigma = value.parse().ok(),
                "epsilon" => epsilon = value.parse().ok(),
                "train_seconds" => train_seconds = value.parse().unwrap_or(0.0),
                _ => {}
            }
        }
    }
    let mmd = MmdConfig::new(
        sigma.ok_or_else(|| Error::data("calibration.conf missing sigma"))?,
        epsilon.ok_or_else(|| Error::data("calibration.conf missing epsilon"))?,
    )?;

    let loaded = load_dataset(input, labels, cfg)?;
    let split = corpus::split_train_test(loaded.samples, cfg.dataset.train_ratio)?;
    let last_train_snapshot = split
        .train
        .chunks(cfg.stream.batch_size.max(1))
        .last()
        .map(|b| DistributionSnapshot::from_samples(b, detector.vocab_size()))
        .ok_or_else(|| Error::data("empty training side"))?;

    let models = TrainedModels {
        detector,
        normality,
        mmd,
        last_train_snapshot,
        detector_log: Default::default(),
        normality_log: Default::default(),
        train_seconds,
    };
    Ok((models, split))
}
