//! Reproduce the batch-similarity measurements: DTW distance within each
//! batch vs against recent history, and the consecutive-batch shift census.
//!
//! ```bash
//! cargo run --example dtw_similarity
//! ```

use omlog::analysis::{dtw_distance, shift_census, similarity_report, DtwCost, SimilarityConfig};
use omlog::corpus::Sample;
use omlog::synth::{synthesize, AnomalyKind, SyntheticSpec};

fn main() -> omlog::Result<()> {
    println!(
        "dtw([1,2,3], [2,2,2]) with |a-b| cost = {}",
        dtw_distance(&[1, 2, 3], &[2, 2, 2], DtwCost::AbsoluteDifference)?
    );
    println!(
        "dtw(x, x) = {}\n",
        dtw_distance(&[4, 1, 4, 4], &[4, 1, 4, 4], DtwCost::Equality)?
    );

    // Repetitive regimes with occasional verbatim repeats: nearby samples
    // should be much more alike than distant ones.
    let spec =
        SyntheticSpec::from_scalars(3, 10, 2, 100, 15, 0.0, AnomalyKind::AlienEvent, 5, 20, 0.5)?;
    let stream = synthesize(&spec)?;
    let batches: Vec<Vec<Sample>> = stream.samples.chunks(20).map(<[Sample]>::to_vec).collect();

    let report = similarity_report(
        &batches,
        &SimilarityConfig {
            history: 10,
            cap: 12,
            seed: 1,
            cost: DtwCost::Equality,
        },
    )?;
    println!(
        "{:<6} {:>14} {:>14}",
        "batch", "internal_dtw", "external_dtw"
    );
    for row in &report.rows {
        println!(
            "{:<6} {:>14} {:>14}",
            row.batch,
            row.internal.map_or("-".into(), |v| format!("{v:.3}")),
            row.external.map_or("-".into(), |v| format!("{v:.3}")),
        );
    }
    let internal: Vec<f64> = report.rows.iter().filter_map(|r| r.internal).collect();
    let external: Vec<f64> = report.rows.iter().filter_map(|r| r.external).collect();
    println!(
        "\nmean internal {:.3} vs mean external {:.3} (distance; lower = more similar)",
        internal.iter().sum::<f64>() / internal.len() as f64,
        external.iter().sum::<f64>() / external.len() as f64,
    );

    let census = shift_census(&batches, 0.05, 0.001, 30)?;
    println!(
        "\nshift census at threshold {}: {} of {} consecutive pairs stable ({:.1}%), {} bit-identical",
        census.threshold,
        census.stable_pairs,
        census.mmd_values.len(),
        100.0 * census.stable_fraction(),
        census.identical_batches,
    );
    Ok(())
}
