//! Model-ready representations of samples: next-event training pairs,
//! per-record header feature vectors, and L1-normalized event-frequency
//! histograms (the drift-detection operand).

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{EventId, Sample};
use crate::error::{Error, Result};

/// A window of `h` event IDs and the event that follows it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NextEventPair {
    pub window: Vec<EventId>,
    pub target: EventId,
}

/// Slide a length-`h` window over the sample; yields `max(0, len - h)` pairs.
pub fn next_event_pairs(sample: &Sample, h: usize) -> Vec<NextEventPair> {
    assert!(h >= 1, "window size must be >= 1");
    if sample.events.len() <= h {
        return Vec::new();
    }
    (0..sample.events.len() - h)
        .map(|i| NextEventPair {
            window: sample.events[i..i + h].to_vec(),
            target: sample.events[i + h],
        })
        .collect()
}

/// Layout of header feature vectors: `[dt, component one-hot + overflow,
/// level one-hot + overflow]`. Components/levels with interned ID beyond the
/// cap share the overflow slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeaderFeatureConfig {
    pub component_cap: usize,
    pub level_cap: usize,
    /// Δt to the previous record is clipped here (seconds) before log scaling.
    pub dt_clip_seconds: f64,
}

impl Default for HeaderFeatureConfig {
    fn default() -> Self {
        Self {
            component_cap: 32,
            level_cap: 8,
            dt_clip_seconds: 3600.0,
        }
    }
}

impl HeaderFeatureConfig {
    pub fn dim(&self) -> usize {
        1 + self.component_cap + 1 + self.level_cap + 1
    }
}

/// Fixed-length real vector describing one record's header in context.
#[derive(Clone, Debug, PartialEq)]
pub struct HeaderFeatureVector {
    pub values: Vec<f64>,
}

/// One vector per record. The first record's Δt slot is 0; Δt is clamped to
/// `[0, clip]` and log(1+x)-scaled.
pub fn header_features(sample: &Sample, cfg: &HeaderFeatureConfig) -> Vec<HeaderFeatureVector> {
    let mut out = Vec::with_capacity(sample.headers.len());
    let mut prev_ts: Option<i64> = None;
    for header in &sample.headers {
        let mut values = vec![0.0; cfg.dim()];
        let dt = match prev_ts {
            Some(prev) => (header.timestamp - prev).max(0) as f64,
            None => 0.0,
        };
        values[0] = dt.min(cfg.dt_clip_seconds).ln_1p();
        let comp_slot = (header.component as usize).min(cfg.component_cap);
        values[1 + comp_slot] = 1.0;
        let level_slot = (header.level as usize).min(cfg.level_cap);
        values[1 + cfg.component_cap + 1 + level_slot] = 1.0;
        prev_ts = Some(header.timestamp);
        out.push(HeaderFeatureVector { values });
    }
    out
}

/// L1-normalized event histogram of one sample. Dimension is fixed at
/// construction; comparisons across dimensions zero-pad the shorter side.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyVector {
    pub values: Vec<f64>,
}

impl FrequencyVector {
    /// True when built from an empty sample (all-zero histogram).
    pub fn is_degenerate(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Normalized histogram of the sample's events over `vocab_size` bins.
pub fn frequency_vector(sample: &Sample, vocab_size: usize) -> FrequencyVector {
    let max_id = sample.events.iter().copied().max().map_or(0, |m| m + 1);
    assert!(
        vocab_size >= max_id,
        "vocab_size {vocab_size} must cover max event id {max_id}"
    );
    let mut values = vec![0.0; vocab_size];
    for &event in &sample.events {
        values[event] += 1.0;
    }
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        for v in &mut values {
            *v /= total;
        }
    }
    FrequencyVector { values }
}

/// Optional import hook for precomputed per-event vectors. Format: one row
/// per event, `event_id dim v1 ... vdim`, whitespace-separated.
pub fn load_embedding_file(path: &Path) -> Result<Vec<(EventId, Vec<f64>)>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let err = |what: &str| Error::data(format!("{}:{}: {what}", path.display(), i + 1));
        let event_id: EventId = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| err("bad event_id"))?;
        let dim: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| err("bad dim"))?;
        let values: Vec<f64> = fields.map(|f| f.parse().unwrap_or(f64::NAN)).collect();
        if values.len() != dim || values.iter().any(|v| !v.is_finite()) {
            return Err(err(
                "row values disagree with declared dim or are non-finite",
            ));
        }
        rows.push((event_id, values));
    }
    Ok(rows)
}
