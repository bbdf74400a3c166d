//! Run every streaming mode over the same drifted synthetic stream and
//! print the resulting scores side by side.
//!
//! ```bash
//! cargo run --example ablation_modes
//! ```

use omlog::config::{Mode, RunConfig};
use omlog::corpus::split_train_test;
use omlog::pipeline::{run_stream, train_models};
use omlog::synth::{synthesize, AnomalyKind, SyntheticSpec};

fn main() -> omlog::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(11u64);

    let mut cfg = RunConfig::default().with_seed(seed);
    cfg.model.h = 3;
    cfg.model.k = 3;
    cfg.model.embed_dim = 12;
    cfg.model.hidden = 32;
    cfg.model.minibatch = 32;
    cfg.normality.threshold = 0.02;
    cfg.normality.sub_window = 10;
    cfg.sgd.learning_rate = 0.3;
    cfg.sgd.epochs = 30;
    cfg.sgd.eval_every = 10;
    cfg.episode.tasks_per_batch = 5;
    cfg.episode.support_size = 12;
    cfg.episode.inner_epochs = 2;
    cfg.episode.inner_lr = 0.3;
    cfg.stream.batch_size = 20;
    cfg.dataset.train_ratio = 0.5;

    // Three regimes over disjoint alphabets; the first regime alone fills the
    // training half, so the whole test half is drifted.
    let spec = SyntheticSpec {
        regimes: {
            let base = SyntheticSpec::from_scalars(
                3,
                12,
                3,
                120,
                20,
                0.1,
                AnomalyKind::ForbiddenTransition,
                seed,
                0,
                0.0,
            )?
            .regimes;
            let mut regimes = base;
            regimes[0].duration = 240;
            regimes
        },
        anomaly_rate: 0.1,
        anomaly: AnomalyKind::ForbiddenTransition,
        sample_len: 20,
        seed,
        repeat_block: 0,
        repeat_fraction: 0.0,
    };
    let stream = synthesize(&spec)?;
    let total = stream.samples.len();
    let split = split_train_test(stream.samples, cfg.dataset.train_ratio)?;
    println!(
        "stream: {total} samples, {} train (after discarding {} abnormal), {} test, shifts at {:?}",
        split.train.len(),
        split.discarded_abnormal_train,
        split.test.len(),
        stream.shift_points
    );

    let models = train_models(&split.train, &cfg)?;
    println!(
        "trained: vocab={} sigma={:.4} epsilon={:.6} train_s={:.1}",
        models.detector.vocab_size(),
        models.mmd.sigma,
        models.mmd.epsilon,
        models.train_seconds
    );

    println!(
        "\n{:<12} {:>6} {:>6} {:>6} {:>8} {:>8} {:>8}",
        "mode", "prec", "rec", "f1", "online", "steps", "test_s"
    );
    for mode in [
        Mode::Offline,
        Mode::Online,
        Mode::OnlineDsd,
        Mode::MetaOnly,
        Mode::OmLog,
    ] {
        let mut mode_cfg = cfg.clone();
        mode_cfg.stream.mode = mode;
        let report = run_stream(&models, &split.test, &mode_cfg)?;
        println!(
            "{:<12} {:>6.3} {:>6.3} {:>6.3} {:>8} {:>8} {:>8.2}",
            mode.name(),
            report.metrics.precision,
            report.metrics.recall,
            report.metrics.f1,
            report.online_routes,
            report.update_steps,
            report.timings.test_seconds
        );
    }
    Ok(())
}
