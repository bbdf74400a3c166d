//! Run configuration: a flat `key = value` text format with `[section]`
//! headers (diff-friendly, no parser dependencies), a typed [`RunConfig`]
//! covering every knob of the pipeline, and manifest round-tripping — a run
//! re-executed from its manifest reproduces results bit-for-bit apart from
//! timings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetKind, DrainConfig};
use crate::detectors::{NextEventConfig, NormalityConfig};
use crate::error::{Error, Result};
use crate::features::HeaderFeatureConfig;
use crate::meta::{EpisodeConfig, Objective};
use crate::neural::SgdConfig;
use crate::synth::AnomalyKind;

/// Which streaming strategy the harness runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Score only; no online updates.
    Offline,
    /// Normality-filter and fine-tune on every batch.
    Online,
    /// Fine-tune only when the router signals a shift.
    OnlineDsd,
    /// Episodic meta-detection on every batch.
    MetaOnly,
    /// Router plus episodic meta-detection.
    OmLog,
}

impl Mode {
    pub fn parse_name(name: &str) -> Result<Self> {
        match name {
            "offline" => Ok(Mode::Offline),
            "online" => Ok(Mode::Online),
            "online-dsd" => Ok(Mode::OnlineDsd),
            "meta" => Ok(Mode::MetaOnly),
            "omlog" => Ok(Mode::OmLog),
            other => Err(Error::config(format!(
                "unknown mode `{other}` (expected offline|online|online-dsd|meta|omlog)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Offline => "offline",
            Mode::Online => "online",
            Mode::OnlineDsd => "online-dsd",
            Mode::MetaOnly => "meta",
            Mode::OmLog => "omlog",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: Option<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    /// Session key pattern for session-grouped datasets (HDFS block IDs).
    pub session_key: String,
    pub window_size: usize,
    pub window_step: usize,
    pub train_ratio: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Generic,
            session_key: r"blk_-?\d+".to_string(),
            window_size: 100,
            window_step: 100,
            train_ratio: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamSection {
    pub mode: Mode,
    pub batch_size: usize,
    /// Multiplier applied to the calibrated epsilon.
    pub epsilon_scale: f64,
    /// Replaces the calibrated epsilon entirely when set (accepts `inf`).
    pub epsilon_override: Option<f64>,
    /// Replaces the median-heuristic sigma when set.
    pub sigma_override: Option<f64>,
}

impl Default for StreamSection {
    fn default() -> Self {
        Self {
            mode: Mode::OmLog,
            batch_size: 100,
            epsilon_scale: 1.0,
            epsilon_override: None,
            sigma_override: None,
        }
    }
}

/// Scalar description of the synthetic stream (expanded via
/// [`crate::synth::SyntheticSpec::from_scalars`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSection {
    pub regimes: usize,
    pub alphabet_size: usize,
    pub branching: usize,
    /// Samples per regime.
    pub duration: usize,
    pub sample_len: usize,
    pub anomaly_rate: f64,
    pub anomaly: AnomalyKind,
    pub seed: u64,
    pub repeat_block: usize,
    pub repeat_fraction: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            regimes: 3,
            alphabet_size: 12,
            branching: 3,
            duration: 240,
            sample_len: 20,
            anomaly_rate: 0.1,
            anomaly: AnomalyKind::ForbiddenTransition,
            seed: 3,
            repeat_block: 0,
            repeat_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub run: RunSection,
    pub dataset: DatasetSection,
    pub parser: DrainConfig,
    pub features: HeaderFeatureConfig,
    pub model: NextEventConfig,
    pub normality: NormalityConfig,
    pub sgd: SgdConfig,
    pub episode: EpisodeConfig,
    pub stream: StreamSection,
    pub synth: SynthSection,
}

impl RunConfig {
    /// Set the master seed and derive the per-model seeds from it, so one
    /// value pins the whole run.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self.apply_master_seed();
        self
    }

    fn apply_master_seed(&mut self) {
        self.model.seed = self.run.seed;
        self.normality.seed = self.run.seed.wrapping_add(1);
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (section, key, value) in parse_flat(text)? {
            cfg.set(&section, &key, &value)?;
        }
        cfg.apply_master_seed();
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let unknown = || Error::config(format!("unknown config key [{section}] {key}"));
        match section {
            "run" => match key {
                "seed" => self.run.seed = parse_num(section, key, value)?,
                "out_dir" => self.run.out_dir = Some(value.to_string()),
                _ => return Err(unknown()),
            },
            "dataset" => match key {
                "kind" => self.dataset.kind = DatasetKind::parse_name(value)?,
                "session_key" => self.dataset.session_key = value.to_string(),
                "window_size" => self.dataset.window_size = parse_num(section, key, value)?,
                "window_step" => self.dataset.window_step = parse_num(section, key, value)?,
                "train_ratio" => self.dataset.train_ratio = parse_num(section, key, value)?,
                _ => return Err(unknown()),
            },
            "parser" => match key {
                "depth" => self.parser.depth = parse_num(section, key, value)?,
                "sim_threshold" => self.parser.sim_threshold = parse_num(section, key, value)?,
                "max_children" => self.parser.max_children = parse_num(section, key, value)?,
                _ => return Err(unknown()),
            },
            "features" => match key {
                "component_cap" => self.features.component_cap = parse_num(section, key, value)?,
                "level_cap" => self.features.level_cap = parse_num(section, key, value)?,
                "dt_clip_seconds" => {
                    self.features.dt_clip_seconds = parse_num(section, key, value)?
                }
                _ => return Err(unknown()),
            },
            "model" => match key {
                "h" => self.model.h = parse_num(section, key, value)?,
                "k" => self.model.k = parse_num(section, key, value)?,
                "embed_dim" => self.model.embed_dim = parse_num(section, key, value)?,
                "hidden" => self.model.hidden = parse_num(section, key, value)?,
                "minibatch" => self.model.minibatch = parse_num(section, key, value)?,
                _ => return Err(unknown()),
            },
            "normality" => match key {
                "hidden" => self.normality.hidden = parse_num(section, key, value)?,
                "bottleneck" => self.normality.bottleneck = parse_num(section, key, value)?,
                "threshold" => self.normality.threshold = parse_num(section, key, value)?,
                "sub_window" => self.normality.sub_window = parse_num(section, key, value)?,
                "minibatch" => self.normality.minibatch = parse_num(section, key, value)?,
                _ => return Err(unknown()),
            },
            "sgd" => match key {
                "learning_rate" => self.sgd.learning_rate = parse_num(section, key, value)?,
                "epochs" => self.sgd.epochs = parse_num(section, key, value)?,
                "eval_every" => self.sgd.eval_every = parse_num(section, key, value)?,
                _ => return Err(unknown()),
            },
            "episode" => match key {
                "tasks_per_batch" => self.episode.tasks_per_batch = parse_num(section, key, value)?,
                "support_size" => self.episode.support_size = parse_num(section, key, value)?,
                "inner_epochs" => self.episode.inner_epochs = parse_num(section, key, value)?,
                "inner_lr" => self.episode.inner_lr = parse_num(section, key, value)?,
                "objective" => {
                    self.episode.objective = match value {
                        "cross_entropy" => Objective::CrossEntropy,
                        "squared_error" => Objective::SquaredError,
                        other => return Err(Error::config(format!("unknown objective `{other}`"))),
                    }
                }
                _ => return Err(unknown()),
            },
            "stream" => match key {
                "mode" => self.stream.mode = Mode::parse_name(value)?,
                "batch_size" => self.stream.batch_size = parse_num(section, key, value)?,
                "epsilon_scale" => self.stream.epsilon_scale = parse_num(section, key, value)?,
                "epsilon_override" => {
                    self.stream.epsilon_override = Some(parse_num(section, key, value)?)
                }
                "sigma_override" => {
                    self.stream.sigma_override = Some(parse_num(section, key, value)?)
                }
                _ => return Err(unknown()),
            },
            "synth" => match key {
                "regimes" => self.synth.regimes = parse_num(section, key, value)?,
                "alphabet_size" => self.synth.alphabet_size = parse_num(section, key, value)?,
                "branching" => self.synth.branching = parse_num(section, key, value)?,
                "duration" => self.synth.duration = parse_num(section, key, value)?,
                "sample_len" => self.synth.sample_len = parse_num(section, key, value)?,
                "anomaly_rate" => self.synth.anomaly_rate = parse_num(section, key, value)?,
                "anomaly" => self.synth.anomaly = AnomalyKind::parse_name(value)?,
                "seed" => self.synth.seed = parse_num(section, key, value)?,
                "repeat_block" => self.synth.repeat_block = parse_num(section, key, value)?,
                "repeat_fraction" => self.synth.repeat_fraction = parse_num(section, key, value)?,
                _ => return Err(unknown()),
            },
            _ => return Err(Error::config(format!("unknown config section [{section}]"))),
        }
        Ok(())
    }

    /// Serialize every field; the output re-parses to an identical config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut sec = |name: &str, pairs: &[(&str, String)]| {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in pairs {
                out.push_str(&format!("{k} = {v}\n"));
            }
            out.push('\n');
        };
        sec("run", &{
            let mut pairs = vec![("seed", self.run.seed.to_string())];
            if let Some(dir) = &self.run.out_dir {
                pairs.push(("out_dir", dir.clone()));
            }
            pairs
        });
        sec(
            "dataset",
            &[
                (
                    "kind",
                    match self.dataset.kind {
                        DatasetKind::Hdfs => "hdfs".into(),
                        DatasetKind::Bgl => "bgl".into(),
                        DatasetKind::Generic => "generic".into(),
                    },
                ),
                ("session_key", self.dataset.session_key.clone()),
                ("window_size", self.dataset.window_size.to_string()),
                ("window_step", self.dataset.window_step.to_string()),
                ("train_ratio", fmt_f64(self.dataset.train_ratio)),
            ],
        );
        sec(
            "parser",
            &[
                ("depth", self.parser.depth.to_string()),
                ("sim_threshold", fmt_f64(self.parser.sim_threshold)),
                ("max_children", self.parser.max_children.to_string()),
            ],
        );
        sec(
            "features",
            &[
                ("component_cap", self.features.component_cap.to_string()),
                ("level_cap", self.features.level_cap.to_string()),
                ("dt_clip_seconds", fmt_f64(self.features.dt_clip_seconds)),
            ],
        );
        sec(
            "model",
            &[
                ("h", self.model.h.to_string()),
                ("k", self.model.k.to_string()),
                ("embed_dim", self.model.embed_dim.to_string()),
                ("hidden", self.model.hidden.to_string()),
                ("minibatch", self.model.minibatch.to_string()),
            ],
        );
        sec(
            "normality",
            &[
                ("hidden", self.normality.hidden.to_string()),
                ("bottleneck", self.normality.bottleneck.to_string()),
                ("threshold", fmt_f64(self.normality.threshold)),
                ("sub_window", self.normality.sub_window.to_string()),
                ("minibatch", self.normality.minibatch.to_string()),
            ],
        );
        sec(
            "sgd",
            &[
                ("learning_rate", fmt_f64(self.sgd.learning_rate)),
                ("epochs", self.sgd.epochs.to_string()),
                ("eval_every", self.sgd.eval_every.to_string()),
            ],
        );
        sec(
            "episode",
            &[
                ("tasks_per_batch", self.episode.tasks_per_batch.to_string()),
                ("support_size", self.episode.support_size.to_string()),
                ("inner_epochs", self.episode.inner_epochs.to_string()),
                ("inner_lr", fmt_f64(self.episode.inner_lr)),
                (
                    "objective",
                    match self.episode.objective {
                        Objective::CrossEntropy => "cross_entropy".into(),
                        Objective::SquaredError => "squared_error".into(),
                    },
                ),
            ],
        );
        sec("stream", &{
            let mut pairs = vec![
                ("mode", self.stream.mode.name().to_string()),
                ("batch_size", self.stream.batch_size.to_string()),
                ("epsilon_scale", fmt_f64(self.stream.epsilon_scale)),
            ];
            if let Some(e) = self.stream.epsilon_override {
                pairs.push(("epsilon_override", fmt_f64(e)));
            }
            if let Some(s) = self.stream.sigma_override {
                pairs.push(("sigma_override", fmt_f64(s)));
            }
            pairs
        });
        sec(
            "synth",
            &[
                ("regimes", self.synth.regimes.to_string()),
                ("alphabet_size", self.synth.alphabet_size.to_string()),
                ("branching", self.synth.branching.to_string()),
                ("duration", self.synth.duration.to_string()),
                ("sample_len", self.synth.sample_len.to_string()),
                ("anomaly_rate", fmt_f64(self.synth.anomaly_rate)),
                ("anomaly", self.synth.anomaly.name().to_string()),
                ("seed", self.synth.seed.to_string()),
                ("repeat_block", self.synth.repeat_block.to_string()),
                ("repeat_fraction", fmt_f64(self.synth.repeat_fraction)),
            ],
        );
        out
    }

    /// Write the manifest for an output directory: the fully resolved config
    /// plus provenance comments.
    pub fn write_manifest(&self, dir: &Path, command: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = format!(
            "# omlog {} manifest\n# command: {command}\n# re-run with: omlog {command} --config <this file>\n\n",
            env!("CARGO_PKG_VERSION"),
        );
        std::fs::write(dir.join("manifest.conf"), header + &self.to_text())?;
        Ok(())
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        // {:?} prints the shortest round-trippable representation.
        format!("{v:?}")
    }
}

trait FromConfigValue: Sized {
    fn parse_value(s: &str) -> Option<Self>;
}

impl FromConfigValue for usize {
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl FromConfigValue for u64 {
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl FromConfigValue for f64 {
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "inf" | "infinity" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            _ => s.parse().ok(),
        }
    }
}

fn parse_num<T: FromConfigValue>(section: &str, key: &str, value: &str) -> Result<T> {
    T::parse_value(value)
        .ok_or_else(|| Error::config(format!("bad value for [{section}] {key}: `{value}`")))
}

/// Parse the flat format into `(section, key, value)` triples. `#` starts a
/// comment; keys outside a section are an error.
pub fn parse_flat(text: &str) -> Result<Vec<(String, String, String)>> {
    let mut triples = Vec::new();
    let mut section: Option<String> = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(name.trim().to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", no + 1)))?;
        let section = section
            .clone()
            .ok_or_else(|| Error::config(format!("line {}: key outside any [section]", no + 1)))?;
        triples.push((section, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(triples)
}
