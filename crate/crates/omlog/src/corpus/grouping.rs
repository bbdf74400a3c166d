//! Grouping parsed records into samples: sessions keyed by an extracted
//! identifier, fixed sliding windows, and the chronological train/test split.

use std::collections::HashMap;

use regex::Regex;

use crate::error::{Error, Result};

use super::{EventVocabulary, Label, ParsedRecord, Sample, SampleOrigin};

/// Session key extracted from a record body.
pub type SessionKey = String;

/// Group records into one sample per distinct key. The key is the first
/// match of `key_pattern` against the rendered record body; records with no
/// match are dropped and counted. Samples are ordered by first appearance of
/// their key and events keep stream order.
pub fn sessionize(
    records: &[ParsedRecord],
    vocab: &EventVocabulary,
    key_pattern: &Regex,
    source: &str,
) -> Result<(Vec<Sample>, Vec<SessionKey>, u64)> {
    let mut order: Vec<SessionKey> = Vec::new();
    let mut by_key: HashMap<SessionKey, Sample> = HashMap::new();
    let mut dropped = 0u64;

    for record in records {
        let body = super::render_body(record, vocab);
        let key = match key_pattern.find(&body) {
            Some(m) => m.as_str().to_string(),
            None => {
                dropped += 1;
                continue;
            }
        };
        let sample = by_key.entry(key.clone()).or_insert_with(|| {
            let window_index = order.len() as u64;
            order.push(key);
            Sample {
                events: Vec::new(),
                headers: Vec::new(),
                label: None,
                origin: SampleOrigin {
                    source: source.to_string(),
                    start_line: record.line_no,
                    window_index,
                },
            }
        });
        sample.events.push(record.event_id);
        sample.headers.push(record.header);
    }

    if !records.is_empty() && order.is_empty() {
        return Err(Error::config(format!(
            "session key pattern `{key_pattern}` matched no records"
        )));
    }

    let samples = order
        .iter()
        .map(|key| by_key.remove(key).expect("keyed sample"))
        .collect();
    Ok((samples, order, dropped))
}

/// Cut the record stream into windows of `size` events advancing by `step`.
/// A trailing window shorter than `size` is dropped. When per-record labels
/// are supplied, a window is abnormal if any member record is abnormal.
pub fn sliding_windows(
    records: &[ParsedRecord],
    record_labels: &[Option<Label>],
    size: usize,
    step: usize,
    source: &str,
) -> Result<Vec<Sample>> {
    if size == 0 {
        return Err(Error::config("window size must be >= 1"));
    }
    if step == 0 {
        return Err(Error::config("window step must be >= 1"));
    }
    let mut samples = Vec::new();
    let mut start = 0usize;
    let mut window_index = 0u64;
    while start + size <= records.len() {
        let slice = &records[start..start + size];
        let labels = &record_labels[start..start + size];
        let label = if labels.iter().all(Option::is_none) {
            None
        } else if labels.contains(&Some(Label::Abnormal)) {
            Some(Label::Abnormal)
        } else {
            Some(Label::Normal)
        };
        samples.push(Sample {
            events: slice.iter().map(|r| r.event_id).collect(),
            headers: slice.iter().map(|r| r.header).collect(),
            label,
            origin: SampleOrigin {
                source: source.to_string(),
                start_line: slice[0].line_no,
                window_index,
            },
        });
        window_index += 1;
        start += step;
    }
    Ok(samples)
}

/// Outcome of the chronological split. The training side keeps only normal
/// samples; abnormal ones are discarded and counted (semi-supervised
/// contract). Unlabeled training samples are treated as normal.
#[derive(Clone, Debug)]
pub struct TrainTestSplit {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub discarded_abnormal_train: usize,
}

/// Split samples chronologically at `ratio`, no shuffling.
pub fn split_train_test(samples: Vec<Sample>, ratio: f64) -> Result<TrainTestSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config(format!(
            "train ratio must be in (0, 1), got {ratio}"
        )));
    }
    let n_train = (samples.len() as f64 * ratio).floor() as usize;
    if n_train == 0 || n_train == samples.len() {
        return Err(Error::config(format!(
            "split leaves an empty side: {} samples at ratio {ratio}",
            samples.len()
        )));
    }
    let mut samples = samples;
    let test = samples.split_off(n_train);
    let before = samples.len();
    let train: Vec<Sample> = samples.into_iter().filter(|s| !s.is_abnormal()).collect();
    let discarded = before - train.len();
    if train.is_empty() {
        return Err(Error::config(
            "no normal training samples remain after discarding abnormal ones",
        ));
    }
    Ok(TrainTestSplit {
        train,
        test,
        discarded_abnormal_train: discarded,
    })
}
