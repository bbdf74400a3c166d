//! Semi-supervised online log anomaly detection for evolving systems.
//!
//! The pipeline parses raw logs into event sequences (Drain-style template
//! mining), watches the test stream for distribution shift between batches
//! (Gaussian-kernel MMD plus a new-event-type check), and routes each batch
//! either to fast offline inference or to online meta-learning fine-tuning
//! on temporally nearest high-confidence normal samples.
//!
//! Modules:
//! - [`corpus`]: log parsing, template mining, sample grouping
//! - [`features`]: next-event pairs, header features, frequency histograms
//! - [`drift`]: MMD, calibration, and the online/offline routing rule
//! - [`neural`]: minimal f64 differentiable core with gradient checking
//! - [`detectors`]: next-event anomaly model and autoencoder normality model
//! - [`meta`]: meta-task construction and episodic fine-tuning
//! - [`pipeline`]: the streaming harness, metrics, and ablation modes
//! - [`report`]: run reports (JSON + per-batch/per-episode CSV)
//! - [`analysis`]: DTW similarity study and the batch shift census
//! - [`synth`]: seeded regime-shift log generator
//! - [`dataset`]: HDFS/BGL/generic loaders
//! - [`config`]: flat key-value run configuration and manifests
//!
//! See the crate examples for runnable walkthroughs of each capability, and
//! the `omlog` binary for the file-oriented CLI.

pub mod analysis;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod detectors;
pub mod drift;
pub mod error;
pub mod features;
pub mod meta;
pub mod neural;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
