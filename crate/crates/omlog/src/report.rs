//! Run reports: per-batch routing records, episodic task records, metrics,
//! and timings, serialized as JSON plus per-batch CSV. Two runs from the
//! same manifest produce identical reports once timings are zeroed.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::detectors::DetectionVerdict;
use crate::drift::Route;
use crate::error::Result;
use crate::pipeline::Metrics;

/// One row of the per-batch decision log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub index: usize,
    pub route: Route,
    /// MMD against the previous batch; None when the mode never consulted
    /// the router.
    pub mmd: Option<f64>,
    pub epsilon: f64,
    pub new_events: bool,
    pub samples: usize,
    pub anomalous_verdicts: usize,
    pub update_steps: u64,
    pub wall_ms: f64,
}

/// One row of the per-batch meta report (one per episode).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaTaskRecord {
    pub batch: usize,
    pub task: usize,
    pub support_size: usize,
    pub support_pairs: usize,
    pub query_loss: f64,
    pub aborted: bool,
    pub wall_ms: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub train_seconds: f64,
    pub test_seconds: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Samples too short for any next-event window, scored normal by default.
    pub short_samples: u64,
    /// Test samples with no ground-truth label (counted as normal in metrics).
    pub unlabeled: u64,
    /// Abnormal samples discarded from the training side of the split.
    pub discarded_abnormal_train: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    /// Effective router parameters after overrides and scaling.
    pub sigma: f64,
    pub epsilon: f64,
    pub batches: Vec<BatchRecord>,
    pub meta_tasks: Vec<MetaTaskRecord>,
    /// Per online-meta batch: (1-based batch ordinal K, aggregated loss).
    pub meta_losses: Vec<(usize, f64)>,
    /// One verdict per test sample, in stream order.
    pub verdicts: Vec<DetectionVerdict>,
    pub metrics: Metrics,
    pub online_routes: usize,
    pub update_steps: u64,
    pub counters: Counters,
    pub timings: Timings,
}

impl RunReport {
    /// Copy with every wall-clock field zeroed; the determinism contract
    /// compares these.
    pub fn with_zeroed_timings(&self) -> Self {
        let mut copy = self.clone();
        copy.timings = Timings::default();
        for b in &mut copy.batches {
            b.wall_ms = 0.0;
        }
        for m in &mut copy.meta_tasks {
            m.wall_ms = 0.0;
        }
        copy
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| crate::error::Error::data(format!("report serialization failed: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Per-batch decision log: batch index, MMD, epsilon, new-event flag,
    /// route, wall time.
    pub fn write_batches_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "batch,route,mmd,epsilon,new_events,samples,anomalous_verdicts,update_steps,wall_ms"
        )?;
        for b in &self.batches {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                b.index,
                match b.route {
                    Route::Online => "online",
                    Route::Offline => "offline",
                },
                b.mmd.map_or(String::new(), |v| format!("{v}")),
                b.epsilon,
                u8::from(b.new_events),
                b.samples,
                b.anomalous_verdicts,
                b.update_steps,
                b.wall_ms,
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-sample verdict rows: sample origin, verdict, offending index.
    pub fn write_verdicts_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "source,start_line,window_index,anomalous,offending_window"
        )?;
        for v in &self.verdicts {
            writeln!(
                w,
                "{},{},{},{},{}",
                v.origin.source,
                v.origin.start_line,
                v.origin.window_index,
                u8::from(v.anomalous),
                v.offending_window.map_or(String::new(), |i| i.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-episode meta report: batch K, task, support size, loss, wall time.
    pub fn write_meta_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "batch,task,support_size,support_pairs,query_loss,aborted,wall_ms"
        )?;
        for m in &self.meta_tasks {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                m.batch,
                m.task,
                m.support_size,
                m.support_pairs,
                m.query_loss,
                u8::from(m.aborted),
                m.wall_ms,
            )?;
        }
        w.flush()?;
        Ok(())
    }
}
