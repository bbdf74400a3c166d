//! Train the next-event model on a repetitive event stream and score
//! samples with the Top-K rule, including one with a planted violation.
//!
//! ```bash
//! cargo run --example next_event_detection
//! ```

use omlog::corpus::{Label, LogHeader, Sample, SampleOrigin};
use omlog::detectors::{NextEventConfig, NextEventModel};
use omlog::features::next_event_pairs;
use omlog::neural::SgdConfig;

fn sample(events: Vec<usize>, idx: u64) -> Sample {
    let headers = (0..events.len())
        .map(|i| LogHeader {
            timestamp: i as i64,
            component: 0,
            level: 0,
        })
        .collect();
    Sample {
        events,
        headers,
        label: Some(Label::Normal),
        origin: SampleOrigin {
            source: "demo".into(),
            start_line: 1,
            window_index: idx,
        },
    }
}

fn main() -> omlog::Result<()> {
    // A strictly cyclic process: 0 1 2 3 4 0 1 2 3 4 ... so the next event
    // is fully determined and K = 1 suffices.
    let motif = [0usize, 1, 2, 3, 4];
    let train: Vec<Sample> = (0..40)
        .map(|i| {
            sample(
                motif.iter().cycle().skip(i % 5).take(24).copied().collect(),
                i as u64,
            )
        })
        .collect();

    let cfg = NextEventConfig {
        h: 3,
        k: 1,
        embed_dim: 8,
        hidden: 16,
        minibatch: 16,
        seed: 5,
    };
    let mut model = NextEventModel::new(cfg, 5);
    let pairs: Vec<_> = train.iter().flat_map(|s| next_event_pairs(s, 3)).collect();
    let log = model.train_initial(
        &pairs,
        &SgdConfig {
            learning_rate: 0.5,
            epochs: 40,
            eval_every: 10,
        },
    )?;
    println!(
        "trained on {} pairs; loss {:.4} -> {:.4} (best checkpoint at epoch {})",
        pairs.len(),
        log.epoch_losses.first().unwrap(),
        log.epoch_losses.last().unwrap(),
        log.best_epoch
    );

    let clean = sample(motif.iter().cycle().take(20).copied().collect(), 100);
    let verdict = model.score_sample(&clean);
    println!("clean sample      -> anomalous: {}", verdict.anomalous);

    // Plant a violation: ... 2 3 0 ... (3 never transitions to 0).
    let mut planted = motif.iter().cycle().take(20).copied().collect::<Vec<_>>();
    planted[9] = 0;
    let verdict = model.score_sample(&sample(planted, 101));
    println!(
        "planted violation -> anomalous: {} (first offending window: {:?})",
        verdict.anomalous, verdict.offending_window
    );

    // Grow the classifier for a new event type; old logits are untouched.
    let before = model.logits(&[0, 1, 2]);
    model.grow_classes(7)?;
    let after = model.logits(&[0, 1, 2]);
    println!(
        "grew classifier 5 -> 7 classes; old logits preserved: {}",
        before == after[..5].to_vec()
    );
    Ok(())
}
