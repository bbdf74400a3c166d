//! Train the autoencoder normality model on header features from regular
//! traffic and use it to harvest high-confidence normal samples from a
//! batch containing irregular ones.
//!
//! ```bash
//! cargo run --example normality_filter
//! ```

use omlog::corpus::{Label, LogHeader, Sample, SampleOrigin};
use omlog::detectors::{NormalityConfig, NormalityModel};
use omlog::features::HeaderFeatureConfig;
use omlog::neural::SgdConfig;

fn sample(n: usize, dt: i64, level: u32, idx: u64) -> Sample {
    let headers = (0..n)
        .map(|i| LogHeader {
            timestamp: i as i64 * dt,
            component: (i % 3) as u32,
            level,
        })
        .collect();
    Sample {
        events: vec![0; n],
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
    let cfg = NormalityConfig {
        hidden: 12,
        bottleneck: 6,
        threshold: 0.02,
        sub_window: 10,
        minibatch: 16,
        seed: 3,
    };
    let mut model = NormalityModel::new(cfg, HeaderFeatureConfig::default());

    // Regular traffic: one record per second, INFO level.
    let train: Vec<Sample> = (0..64).map(|i| sample(30, 1, 0, i)).collect();
    let windows: Vec<Vec<f64>> = train.iter().flat_map(|s| model.pooled_windows(s)).collect();
    let log = model.train(
        &windows,
        &SgdConfig {
            learning_rate: 0.3,
            epochs: 80,
            eval_every: 20,
        },
    )?;
    println!(
        "trained autoencoder on {} pooled windows; reconstruction {:.5} -> {:.5}",
        windows.len(),
        log.epoch_losses.first().unwrap(),
        log.epoch_losses.last().unwrap()
    );

    // A test batch with two irregular samples: bursty timestamps and an
    // unseen severity level.
    let mut batch: Vec<Sample> = (0..6).map(|i| sample(30, 1, 0, 100 + i)).collect();
    batch[2] = sample(30, 1200, 0, 102);
    batch[4] = sample(30, 1, 3, 104);

    println!(
        "\nper-sample reconstruction MSE (threshold {}):",
        model.threshold()
    );
    for (i, s) in batch.iter().enumerate() {
        println!("  sample {i}: {:.5}", model.sample_mse(s));
    }
    let kept = model.filter_indices(&batch);
    println!("high-confidence normal subset: {kept:?}");
    Ok(())
}
