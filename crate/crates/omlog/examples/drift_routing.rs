//! Calibrate the shift detector on a stable stream, then watch it route
//! batches: stable content stays offline, frequency shifts and new event
//! types go online.
//!
//! ```bash
//! cargo run --example drift_routing
//! ```

use omlog::corpus::split_train_test;
use omlog::drift::{calibrate, decide, DistributionSnapshot, Route};
use omlog::synth::{synthesize, AnomalyKind, SyntheticSpec};

fn main() -> omlog::Result<()> {
    // Two regimes over disjoint alphabets; the second half of the stream
    // drifts. Every fifth block repeats verbatim for some stable batches.
    let spec =
        SyntheticSpec::from_scalars(2, 10, 3, 200, 15, 0.0, AnomalyKind::AlienEvent, 7, 20, 0.4)?;
    let stream = synthesize(&spec)?;
    let split = split_train_test(stream.samples, 0.5)?;

    let batch_size = 20;
    let vocab: usize = split
        .train
        .iter()
        .flat_map(|s| s.events.iter().map(|&e| e + 1))
        .max()
        .unwrap_or(1);

    let train_batches: Vec<DistributionSnapshot> = split
        .train
        .chunks(batch_size)
        .map(|b| DistributionSnapshot::from_samples(b, vocab))
        .collect();
    let cfg = calibrate(&train_batches)?;
    println!(
        "calibration: sigma = {:.4}, epsilon = {:.6}\n",
        cfg.sigma, cfg.epsilon
    );

    let mut prev = train_batches.last().unwrap().clone();
    let mut known = vocab;
    println!(
        "{:<6} {:>10} {:>10} {:>8}",
        "batch", "mmd", "new_types", "route"
    );
    for (i, batch) in split.test.chunks(batch_size).enumerate() {
        let cur = DistributionSnapshot::from_samples(batch, known);
        let decision = decide(&prev, &cur, known, &cfg)?;
        println!(
            "{:<6} {:>10.6} {:>10} {:>8}",
            i,
            decision.mmd,
            decision.new_events,
            match decision.route {
                Route::Online => "ONLINE",
                Route::Offline => "offline",
            }
        );
        if decision.route == Route::Online {
            // Online handling would grow the vocabulary; mirror that here so
            // later batches of the new regime stop counting as novel.
            known = known.max(cur.event_types.iter().max().map_or(0, |m| m + 1));
        }
        prev = cur;
    }
    Ok(())
}
