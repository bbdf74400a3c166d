//! Build meta-tasks from one drifted batch and watch episodic fine-tuning
//! adapt the model task by task: supports come from the batch's own
//! high-confidence normals, nearest in stream position to each query slice.
//!
//! ```bash
//! cargo run --example meta_episodes
//! ```

use omlog::corpus::split_train_test;
use omlog::detectors::{NextEventConfig, NextEventModel, NormalityConfig, NormalityModel};
use omlog::features::{next_event_pairs, HeaderFeatureConfig};
use omlog::meta::{build_meta_tasks, detect_batch, EpisodeConfig, Objective};
use omlog::neural::SgdConfig;
use omlog::synth::{synthesize, AnomalyKind, SyntheticSpec};

fn main() -> omlog::Result<()> {
    // Regime 1 trains the model; regime 2 (disjoint alphabet) is the drift.
    let spec = SyntheticSpec::from_scalars(
        2,
        10,
        2,
        120,
        20,
        0.1,
        AnomalyKind::ForbiddenTransition,
        21,
        0,
        0.0,
    )?;
    let stream = synthesize(&spec)?;
    let split = split_train_test(stream.samples, 0.5)?;

    let model_cfg = NextEventConfig {
        h: 3,
        k: 2,
        embed_dim: 12,
        hidden: 32,
        minibatch: 16,
        seed: 21,
    };
    let mut model = NextEventModel::new(model_cfg, 10);
    let pairs: Vec<_> = split
        .train
        .iter()
        .flat_map(|s| next_event_pairs(s, 3))
        .collect();
    model.train_initial(
        &pairs,
        &SgdConfig {
            learning_rate: 0.3,
            epochs: 25,
            eval_every: 5,
        },
    )?;

    let mut normality = NormalityModel::new(
        NormalityConfig {
            hidden: 12,
            bottleneck: 6,
            threshold: 0.02,
            sub_window: 10,
            minibatch: 16,
            seed: 22,
        },
        HeaderFeatureConfig::default(),
    );
    let windows: Vec<Vec<f64>> = split
        .train
        .iter()
        .flat_map(|s| normality.pooled_windows(s))
        .collect();
    normality.train(
        &windows,
        &SgdConfig {
            learning_rate: 0.3,
            epochs: 60,
            eval_every: 20,
        },
    )?;

    // The first drifted batch: every event type is new to the model.
    let batch = &split.test[..20];
    let episode_cfg = EpisodeConfig {
        tasks_per_batch: 4,
        support_size: 8,
        inner_epochs: 2,
        inner_lr: 0.3,
        objective: Objective::CrossEntropy,
    };

    let normals = normality.filter_indices(batch);
    println!(
        "normality filter kept {} of {} samples as online training data",
        normals.len(),
        batch.len()
    );
    for task in build_meta_tasks(batch, &normals, &episode_cfg) {
        let supports: Vec<u64> = task
            .support
            .iter()
            .map(|&i| batch[i].origin.window_index)
            .collect();
        println!(
            "  task {}: query [{}, {}) <- supports at stream positions {supports:?}",
            task.index, task.query.start, task.query.end
        );
    }

    let result = detect_batch(&mut model, &normality, batch, &episode_cfg, 1)?;
    println!("\nper-episode query loss (updates persist across episodes):");
    for e in &result.episodes {
        println!(
            "  task {}: support {:>2} samples / {:>3} pairs, query loss {:.3}, {} update steps",
            e.task_index, e.support_size, e.support_pairs, e.query_loss, e.update_steps
        );
    }
    let anomalous = result.verdicts.iter().filter(|v| v.anomalous).count();
    let truly = batch.iter().filter(|s| s.is_abnormal()).count();
    println!(
        "\nbatch verdicts: {anomalous} anomalous ({truly} truly abnormal); aggregated loss {:.4}; vocab grew to {}",
        result.meta_loss,
        model.vocab_size()
    );
    Ok(())
}
