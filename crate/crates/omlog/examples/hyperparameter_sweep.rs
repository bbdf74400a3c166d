//! Sweep the routing threshold scale and the meta-task count over a drifted
//! stream and print the performance/efficiency table.
//!
//! ```bash
//! cargo run --example hyperparameter_sweep
//! ```

use omlog::config::{Mode, RunConfig};
use omlog::corpus::split_train_test;
use omlog::pipeline::{sweep, train_models};
use omlog::synth::{synthesize, AnomalyKind, SyntheticSpec};

fn main() -> omlog::Result<()> {
    let mut cfg = RunConfig::default().with_seed(42);
    cfg.model.h = 3;
    cfg.model.k = 3;
    cfg.model.embed_dim = 12;
    cfg.model.hidden = 32;
    cfg.model.minibatch = 16;
    cfg.sgd.learning_rate = 0.3;
    cfg.sgd.epochs = 25;
    cfg.sgd.eval_every = 5;
    cfg.episode.support_size = 12;
    cfg.episode.inner_epochs = 2;
    cfg.episode.inner_lr = 0.3;
    cfg.stream.batch_size = 20;
    cfg.stream.mode = Mode::OmLog;

    let mut spec = SyntheticSpec::from_scalars(
        2,
        12,
        2,
        120,
        20,
        0.1,
        AnomalyKind::ForbiddenTransition,
        42,
        20,
        0.4,
    )?;
    spec.regimes[0].duration = 240;
    let stream = synthesize(&spec)?;
    let split = split_train_test(stream.samples, 0.5)?;
    let models = train_models(&split.train, &cfg)?;

    let points = sweep(&models, &split.test, &cfg, &[0.5, 1.0, 50.0], &[2, 5, 10])?;
    println!(
        "{:>10} {:>6} {:>8} {:>8} {:>8} {:>9}",
        "eps_scale", "tasks", "f1", "online", "steps", "test_s"
    );
    for (point, _) in &points {
        println!(
            "{:>10} {:>6} {:>8.4} {:>8} {:>8} {:>9.3}",
            point.epsilon_scale,
            point.tasks_per_batch,
            point.f1,
            point.online_routes,
            point.update_steps,
            point.test_seconds,
        );
    }
    println!("\nhigher epsilon scales route fewer batches online (efficiency up);");
    println!("the task count trades per-batch adaptation against episode overhead.");
    Ok(())
}
