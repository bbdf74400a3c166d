//! Online meta-learning detection: split a routed batch into contiguous
//! query slices, pair each with the temporally nearest high-confidence
//! normal samples as its support set, and fine-tune episodically. Updates
//! persist across episodes and across batches (the fine-tuned weights become
//! the model for the next task batch).

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::detectors::{DetectionVerdict, NextEventModel, NormalityModel};
use crate::error::Result;
use crate::features::{next_event_pairs, NextEventPair};
use crate::neural::{softmax_cross_entropy, squared_error_on_probs};

/// Inner objective for episodic fine-tuning and the reported query loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Softmax cross-entropy over next-event classes.
    CrossEntropy,
    /// Squared error between the softmax distribution and the one-hot target.
    SquaredError,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Number of meta-tasks T a batch is split into.
    pub tasks_per_batch: usize,
    /// Support-set size n per task.
    pub support_size: usize,
    pub inner_epochs: usize,
    pub inner_lr: f64,
    pub objective: Objective,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            tasks_per_batch: 10,
            support_size: 16,
            inner_epochs: 5,
            inner_lr: 0.00001,
            objective: Objective::CrossEntropy,
        }
    }
}

/// One meta-task: a contiguous query slice of the batch plus the indices of
/// its nearest-neighbor support samples (both index into the batch).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaTask {
    pub index: usize,
    pub query: Range<usize>,
    pub support: Vec<usize>,
}

/// What one episode did.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub task_index: usize,
    pub support_size: usize,
    pub support_pairs: usize,
    /// Mean per-query-window objective after the update.
    pub query_loss: f64,
    pub query_windows: usize,
    pub update_steps: u64,
    pub aborted: bool,
    pub wall_ms: f64,
}

/// Outcome of online meta-detection over one task batch.
#[derive(Clone, Debug)]
pub struct TaskBatchResult {
    pub verdicts: Vec<DetectionVerdict>,
    /// `(1/K)(1/T) Σ_tasks` mean query loss; K is the 1-based batch ordinal.
    pub meta_loss: f64,
    pub episodes: Vec<EpisodeReport>,
    pub update_steps: u64,
    pub short_samples: u64,
}

fn lower_median(mut values: Vec<u64>) -> u64 {
    values.sort_unstable();
    values[(values.len() - 1) / 2]
}

/// Split the batch into T contiguous query slices (sizes differing by at
/// most one) and attach to each the `n` normals closest in stream position
/// to the slice's median origin, ties resolved toward the earlier sample.
/// With no normals the tasks degrade to pure inference.
pub fn build_meta_tasks(batch: &[Sample], normals: &[usize], cfg: &EpisodeConfig) -> Vec<MetaTask> {
    if batch.is_empty() {
        return Vec::new();
    }
    let t = cfg.tasks_per_batch.max(1).min(batch.len());
    let base = batch.len() / t;
    let rem = batch.len() % t;

    let mut tasks = Vec::with_capacity(t);
    let mut start = 0usize;
    for index in 0..t {
        let len = base + usize::from(index < rem);
        let query = start..start + len;
        start += len;

        let median = lower_median(
            batch[query.clone()]
                .iter()
                .map(|s| s.origin.window_index)
                .collect(),
        );
        let mut candidates: Vec<(u64, u64, usize)> = normals
            .iter()
            .map(|&i| {
                let origin = batch[i].origin.window_index;
                (origin.abs_diff(median), origin, i)
            })
            .collect();
        candidates.sort_unstable();
        let support = candidates
            .into_iter()
            .take(cfg.support_size)
            .map(|(_, _, i)| i)
            .collect();
        tasks.push(MetaTask {
            index,
            query,
            support,
        });
    }
    tasks
}

fn window_objective(model: &NextEventModel, pair: &NextEventPair, objective: Objective) -> f64 {
    let logits = model.logits(&pair.window);
    match objective {
        Objective::CrossEntropy => softmax_cross_entropy(&logits, pair.target).0,
        Objective::SquaredError => squared_error_on_probs(&logits, pair.target).0,
    }
}

/// Run one episode: fine-tune on the support pairs, then score the query
/// slice with the updated model. A non-finite inner loss aborts the episode,
/// restores the pre-episode snapshot, and degrades to pure inference.
pub fn run_episode(
    model: &mut NextEventModel,
    batch: &[Sample],
    task: &MetaTask,
    cfg: &EpisodeConfig,
) -> (Vec<DetectionVerdict>, EpisodeReport) {
    let started = Instant::now();
    let h = model.h();
    let minibatch = model.config().minibatch.max(1);

    let support_pairs: Vec<NextEventPair> = task
        .support
        .iter()
        .flat_map(|&i| next_event_pairs(&batch[i], h))
        .collect();

    let mut update_steps = 0u64;
    let mut aborted = false;
    if !support_pairs.is_empty() && cfg.inner_lr != 0.0 {
        let snapshot = model.snapshot();
        'training: for _ in 0..cfg.inner_epochs {
            for chunk in support_pairs.chunks(minibatch) {
                match model.train_minibatch(chunk, cfg.inner_lr) {
                    Ok(_) => update_steps += 1,
                    Err(_) => {
                        model.restore(&snapshot);
                        update_steps = 0;
                        aborted = true;
                        break 'training;
                    }
                }
            }
        }
    }

    let mut verdicts = Vec::with_capacity(task.query.len());
    let mut query_loss_total = 0.0;
    let mut query_windows = 0usize;
    for i in task.query.clone() {
        let sample = &batch[i];
        verdicts.push(model.score_sample(sample));
        for pair in next_event_pairs(sample, h) {
            let in_vocab = pair.target < model.vocab_size()
                && pair.window.iter().all(|&e| e < model.vocab_size());
            if in_vocab {
                query_loss_total += window_objective(model, &pair, cfg.objective);
                query_windows += 1;
            }
        }
    }
    let query_loss = if query_windows > 0 {
        query_loss_total / query_windows as f64
    } else {
        0.0
    };

    let report = EpisodeReport {
        task_index: task.index,
        support_size: task.support.len(),
        support_pairs: support_pairs.len(),
        query_loss,
        query_windows,
        update_steps,
        aborted,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    (verdicts, report)
}

/// Online meta-detection for one routed batch: grow classes for unseen
/// events, harvest high-confidence normals, build tasks, and run the
/// episodes sequentially in task order. Weight updates persist; the final
/// weights are the model carried into the next batch.
pub fn detect_batch(
    model: &mut NextEventModel,
    normality: &NormalityModel,
    batch: &[Sample],
    cfg: &EpisodeConfig,
    batch_ordinal: usize,
) -> Result<TaskBatchResult> {
    debug_assert!(batch_ordinal >= 1);
    if let Some(max_id) = batch.iter().flat_map(|s| s.events.iter().copied()).max() {
        if max_id >= model.vocab_size() {
            model.grow_classes(max_id + 1)?;
        }
    }

    let normals = normality.filter_indices(batch);
    let tasks = build_meta_tasks(batch, &normals, cfg);

    let h = model.h();
    let mut verdicts = Vec::with_capacity(batch.len());
    let mut episodes = Vec::with_capacity(tasks.len());
    let mut update_steps = 0u64;
    for task in &tasks {
        let (task_verdicts, report) = run_episode(model, batch, task, cfg);
        update_steps += report.update_steps;
        verdicts.extend(task_verdicts);
        episodes.push(report);
    }

    let t = tasks.len().max(1) as f64;
    let meta_loss = episodes.iter().map(|e| e.query_loss).sum::<f64>() / t / batch_ordinal as f64;
    let short_samples = batch.iter().filter(|s| s.events.len() <= h).count() as u64;

    Ok(TaskBatchResult {
        verdicts,
        meta_loss,
        episodes,
        update_steps,
        short_samples,
    })
}
