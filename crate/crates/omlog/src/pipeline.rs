//! The streaming harness: train the two models on the normal-only prefix,
//! calibrate the router, then consume the test stream in batches — routing
//! each batch to offline scoring or an online update path according to the
//! configured mode — and accumulate verdicts, metrics, and timings.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::corpus::{Label, Sample};
use crate::detectors::{DetectionVerdict, NextEventModel, NormalityModel, TrainLog};
use crate::drift::{self, DistributionSnapshot, MmdConfig, Route};
use crate::error::{Error, Result};
use crate::features::{next_event_pairs, NextEventPair};
use crate::meta;
use crate::report::{BatchRecord, Counters, MetaTaskRecord, RunReport, Timings};

/// Confusion counts and the derived scores, with the undefined-safe
/// convention: a zero denominator yields 0 and sets `flagged`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub flagged: bool,
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let mut flagged = false;
        let mut ratio = |num: u64, den: u64| -> f64 {
            if den == 0 {
                flagged = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            flagged = true;
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f1,
            flagged,
        }
    }
}

/// Confusion counts and scores for aligned verdicts and labels. Unlabeled
/// samples count as normal ground truth; the caller tracks how many.
pub fn evaluate(verdicts: &[DetectionVerdict], labels: &[Option<Label>]) -> Result<Metrics> {
    if verdicts.len() != labels.len() {
        return Err(Error::data(format!(
            "evaluate: {} verdicts vs {} labels",
            verdicts.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (v, l) in verdicts.iter().zip(labels) {
        let truth_abnormal = *l == Some(Label::Abnormal);
        match (v.anomalous, truth_abnormal) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_))
}

/// Everything the streaming phase needs from initial training.
#[derive(Clone)]
pub struct TrainedModels {
    pub detector: NextEventModel,
    pub normality: NormalityModel,
    /// Calibrated router parameters (before run-time epsilon adjustments).
    pub mmd: MmdConfig,
    /// Snapshot of the last training batch — the initial "previous batch".
    pub last_train_snapshot: DistributionSnapshot,
    pub detector_log: TrainLog,
    pub normality_log: TrainLog,
    pub train_seconds: f64,
}

/// Train both models on the normal-only training samples and calibrate the
/// router on the training batches.
pub fn train_models(train: &[Sample], cfg: &RunConfig) -> Result<TrainedModels> {
    if train.is_empty() {
        return Err(Error::data("training requires at least one sample"));
    }
    let started = Instant::now();
    let vocab_size = train
        .iter()
        .flat_map(|s| s.events.iter().copied())
        .max()
        .map_or(1, |m| m + 1);

    let mut detector = NextEventModel::new(cfg.model, vocab_size);
    let pairs: Vec<NextEventPair> = train
        .iter()
        .flat_map(|s| next_event_pairs(s, cfg.model.h))
        .collect();
    let detector_log = detector.train_initial(&pairs, &cfg.sgd)?;

    let mut normality = NormalityModel::new(cfg.normality, cfg.features);
    let windows: Vec<Vec<f64>> = train
        .iter()
        .flat_map(|s| normality.pooled_windows(s))
        .collect();
    let normality_log = normality.train(&windows, &cfg.sgd)?;

    let batches: Vec<DistributionSnapshot> = train
        .chunks(cfg.stream.batch_size.max(1))
        .map(|b| DistributionSnapshot::from_samples(b, vocab_size))
        .collect();
    let mmd = match cfg.stream.sigma_override {
        Some(sigma) => drift::calibrate_with_sigma(&batches, sigma)?,
        None => drift::calibrate(&batches)?,
    };
    let last_train_snapshot = batches.last().expect("non-empty train").clone();

    Ok(TrainedModels {
        detector,
        normality,
        mmd,
        last_train_snapshot,
        detector_log,
        normality_log,
        train_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Effective router parameters for a run: the calibrated sigma plus the
/// configured epsilon scaling or override.
pub fn effective_mmd(calibrated: &MmdConfig, cfg: &RunConfig) -> MmdConfig {
    let epsilon = cfg
        .stream
        .epsilon_override
        .unwrap_or(calibrated.epsilon * cfg.stream.epsilon_scale);
    MmdConfig {
        sigma: calibrated.sigma,
        epsilon,
    }
}

/// Batch-online baseline update: grow for unseen events, fine-tune on the
/// batch's high-confidence normals with a single training pass (the
/// one-iteration update of the standard online baseline), then score the
/// whole batch. Aborts and rolls back on a non-finite loss, like an episode.
fn online_update_and_score(
    detector: &mut NextEventModel,
    normality: &NormalityModel,
    batch: &[Sample],
    cfg: &RunConfig,
    update_steps: &mut u64,
) -> Result<Vec<DetectionVerdict>> {
    if let Some(max_id) = batch.iter().flat_map(|s| s.events.iter().copied()).max() {
        if max_id >= detector.vocab_size() {
            detector.grow_classes(max_id + 1)?;
        }
    }
    let normals = normality.filter_indices(batch);
    let pairs: Vec<NextEventPair> = normals
        .iter()
        .flat_map(|&i| next_event_pairs(&batch[i], detector.h()))
        .collect();
    if !pairs.is_empty() && cfg.episode.inner_lr != 0.0 {
        let snapshot = detector.snapshot();
        let minibatch = cfg.model.minibatch.max(1);
        for chunk in pairs.chunks(minibatch) {
            match detector.train_minibatch(chunk, cfg.episode.inner_lr) {
                Ok(_) => *update_steps += 1,
                Err(_) => {
                    detector.restore(&snapshot);
                    break;
                }
            }
        }
    }
    Ok(batch.iter().map(|s| detector.score_sample(s)).collect())
}

/// Stream the test samples through the configured mode. Consumes batches in
/// temporal order, one pass, final short batch included.
pub fn run_stream(models: &TrainedModels, test: &[Sample], cfg: &RunConfig) -> Result<RunReport> {
    if test.is_empty() {
        return Err(Error::data("test stream is empty"));
    }
    let started = Instant::now();
    let mode = cfg.stream.mode;
    let mmd_cfg = effective_mmd(&models.mmd, cfg);
    let mut detector = models.detector.clone();
    let normality = models.normality.clone();
    let mut prev = models.last_train_snapshot.clone();

    let mut batch_records = Vec::new();
    let mut meta_tasks = Vec::new();
    let mut meta_losses = Vec::new();
    let mut verdicts: Vec<DetectionVerdict> = Vec::with_capacity(test.len());
    let mut online_routes = 0usize;
    let mut update_steps_total = 0u64;
    let mut short_samples = 0u64;

    for (index, batch) in test.chunks(cfg.stream.batch_size.max(1)).enumerate() {
        let batch_started = Instant::now();
        let known = detector.vocab_size();
        let cur = DistributionSnapshot::from_samples(batch, known);
        short_samples += batch
            .iter()
            .filter(|s| s.events.len() <= detector.h())
            .count() as u64;

        let (route, mmd) = match mode {
            Mode::Offline => (Route::Offline, None),
            Mode::Online | Mode::MetaOnly => (Route::Online, None),
            Mode::OnlineDsd | Mode::OmLog => {
                let decision = drift::decide(&prev, &cur, known, &mmd_cfg)?;
                (decision.route, Some(decision.mmd))
            }
        };
        let new_events = cur.event_types.iter().any(|&e| e >= known);

        let mut batch_steps = 0u64;
        let batch_verdicts = match route {
            Route::Offline => batch.iter().map(|s| detector.score_sample(s)).collect(),
            Route::Online => match mode {
                Mode::Online | Mode::OnlineDsd => online_update_and_score(
                    &mut detector,
                    &normality,
                    batch,
                    cfg,
                    &mut batch_steps,
                )?,
                Mode::MetaOnly | Mode::OmLog => {
                    let result = meta::detect_batch(
                        &mut detector,
                        &normality,
                        batch,
                        &cfg.episode,
                        index + 1,
                    )?;
                    batch_steps = result.update_steps;
                    meta_losses.push((index + 1, result.meta_loss));
                    for e in &result.episodes {
                        meta_tasks.push(MetaTaskRecord {
                            batch: index + 1,
                            task: e.task_index,
                            support_size: e.support_size,
                            support_pairs: e.support_pairs,
                            query_loss: e.query_loss,
                            aborted: e.aborted,
                            wall_ms: e.wall_ms,
                        });
                    }
                    result.verdicts
                }
                Mode::Offline => unreachable!("offline mode never routes online"),
            },
        };

        if route == Route::Online {
            online_routes += 1;
        }
        update_steps_total += batch_steps;
        batch_records.push(BatchRecord {
            index,
            route,
            mmd,
            epsilon: mmd_cfg.epsilon,
            new_events,
            samples: batch.len(),
            anomalous_verdicts: batch_verdicts.iter().filter(|v| v.anomalous).count(),
            update_steps: batch_steps,
            wall_ms: batch_started.elapsed().as_secs_f64() * 1e3,
        });
        verdicts.extend(batch_verdicts);
        prev = cur;
    }

    let labels: Vec<Option<Label>> = test.iter().map(|s| s.label).collect();
    let unlabeled = labels.iter().filter(|l| l.is_none()).count() as u64;
    let metrics = evaluate(&verdicts, &labels)?;

    Ok(RunReport {
        config: cfg.clone(),
        sigma: mmd_cfg.sigma,
        epsilon: mmd_cfg.epsilon,
        batches: batch_records,
        meta_tasks,
        meta_losses,
        verdicts,
        metrics,
        online_routes,
        update_steps: update_steps_total,
        counters: Counters {
            short_samples,
            unlabeled,
            discarded_abnormal_train: 0,
        },
        timings: Timings {
            train_seconds: models.train_seconds,
            test_seconds: started.elapsed().as_secs_f64(),
        },
    })
}

/// One grid point of a hyperparameter sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon_scale: f64,
    pub tasks_per_batch: usize,
    pub f1: f64,
    pub online_routes: usize,
    pub update_steps: u64,
    pub test_seconds: f64,
}

/// Run the stream once per (epsilon scale x task count) grid point against
/// the same trained models; returns the points plus the full reports.
pub fn sweep(
    models: &TrainedModels,
    test: &[Sample],
    base: &RunConfig,
    epsilon_scales: &[f64],
    tasks: &[usize],
) -> Result<Vec<(SweepPoint, RunReport)>> {
    if epsilon_scales.is_empty() || tasks.is_empty() {
        return Err(Error::config("sweep grids must be non-empty"));
    }
    let mut out = Vec::with_capacity(epsilon_scales.len() * tasks.len());
    for &scale in epsilon_scales {
        for &t in tasks {
            let mut cfg = base.clone();
            cfg.stream.epsilon_scale = scale;
            cfg.episode.tasks_per_batch = t;
            let report = run_stream(models, test, &cfg)?;
            out.push((
                SweepPoint {
                    epsilon_scale: scale,
                    tasks_per_batch: t,
                    f1: report.metrics.f1,
                    online_routes: report.online_routes,
                    update_steps: report.update_steps,
                    test_seconds: report.timings.test_seconds,
                },
                report,
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SampleOrigin;

    fn verdict(anomalous: bool) -> DetectionVerdict {
        DetectionVerdict {
            origin: SampleOrigin {
                source: "t".into(),
                start_line: 0,
                window_index: 0,
            },
            anomalous,
            offending_window: anomalous.then_some(0),
        }
    }

    #[test]
    fn metrics_formulas_on_direct_counts() {
        let m = Metrics::from_counts(3, 1, 10, 1);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.75);
        assert!((m.f1 - 0.75).abs() < 1e-15);
        assert!(!m.flagged);
    }

    #[test]
    fn all_correct_gives_unit_scores() {
        let verdicts = vec![verdict(true), verdict(false), verdict(true)];
        let labels = vec![
            Some(Label::Abnormal),
            Some(Label::Normal),
            Some(Label::Abnormal),
        ];
        let m = evaluate(&verdicts, &labels).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_predicted_positives_flags_metrics() {
        let verdicts = vec![verdict(false), verdict(false)];
        let labels = vec![Some(Label::Abnormal), Some(Label::Normal)];
        let m = evaluate(&verdicts, &labels).unwrap();
        assert_eq!(m.precision, 0.0);
        assert!(m.flagged);
    }

    #[test]
    fn evaluate_rejects_length_mismatch() {
        assert!(evaluate(&[verdict(true)], &[]).is_err());
    }
}
