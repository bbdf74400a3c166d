//! The full pipeline end to end on a synthetic evolving stream: train on
//! the stable prefix, then stream the drifting remainder with shift-aware
//! routing and episodic online adaptation.
//!
//! ```bash
//! cargo run --example omlog_stream
//! ```

use omlog::config::{Mode, RunConfig};
use omlog::corpus::split_train_test;
use omlog::drift::Route;
use omlog::pipeline::{run_stream, train_models};
use omlog::synth::{synthesize, AnomalyKind, SyntheticSpec};

fn main() -> omlog::Result<()> {
    let mut cfg = RunConfig::default().with_seed(11);
    cfg.model.h = 3;
    cfg.model.k = 3;
    cfg.model.embed_dim = 12;
    cfg.model.hidden = 32;
    cfg.model.minibatch = 16;
    cfg.normality.threshold = 0.02;
    cfg.sgd.learning_rate = 0.3;
    cfg.sgd.epochs = 30;
    cfg.sgd.eval_every = 10;
    cfg.episode.tasks_per_batch = 5;
    cfg.episode.support_size = 12;
    cfg.episode.inner_epochs = 2;
    cfg.episode.inner_lr = 0.3;
    cfg.stream.batch_size = 20;
    cfg.stream.mode = Mode::OmLog;

    // Three regimes; regime 1 alone fills the training half, with some
    // verbatim block repeats in the test half for stable batches.
    let mut spec = SyntheticSpec::from_scalars(
        3,
        12,
        2,
        120,
        20,
        0.1,
        AnomalyKind::ForbiddenTransition,
        11,
        20,
        0.35,
    )?;
    spec.regimes[0].duration = 240;
    let stream = synthesize(&spec)?;
    println!(
        "stream: {} samples, regime shifts at sample indices {:?}",
        stream.samples.len(),
        stream.shift_points
    );

    let split = split_train_test(stream.samples, 0.5)?;
    let models = train_models(&split.train, &cfg)?;
    println!(
        "trained initial model: vocab {}, sigma {:.4}, epsilon {:.6}, {:.1}s",
        models.detector.vocab_size(),
        models.mmd.sigma,
        models.mmd.epsilon,
        models.train_seconds
    );

    let report = run_stream(&models, &split.test, &cfg)?;
    println!("\nper-batch routing:");
    println!(
        "{:<6} {:>8} {:>10} {:>5} {:>6} {:>7}",
        "batch", "route", "mmd", "new", "anom", "steps"
    );
    for b in &report.batches {
        println!(
            "{:<6} {:>8} {:>10} {:>5} {:>6} {:>7}",
            b.index,
            match b.route {
                Route::Online => "ONLINE",
                Route::Offline => "offline",
            },
            b.mmd.map_or("-".to_string(), |m| format!("{m:.5}")),
            u8::from(b.new_events),
            b.anomalous_verdicts,
            b.update_steps,
        );
    }
    println!(
        "\n{} of {} batches online, {} update steps, precision {:.3}, recall {:.3}, f1 {:.3}, test {:.2}s",
        report.online_routes,
        report.batches.len(),
        report.update_steps,
        report.metrics.precision,
        report.metrics.recall,
        report.metrics.f1,
        report.timings.test_seconds,
    );
    Ok(())
}
