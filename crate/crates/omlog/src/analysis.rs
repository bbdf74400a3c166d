//! Batch-level empirical analysis: DTW-based internal/external sample
//! similarity and the consecutive-batch shift census. These reproduce the
//! measurements that motivate routing: nearby samples are far more alike
//! than distant ones, and most consecutive batches show no shift at all.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EventId, Sample};
use crate::drift::{mmd_value, DistributionSnapshot, MmdConfig};
use crate::error::{Error, Result};
use crate::features::frequency_vector;

/// Local cost for the DTW recurrence. Event IDs are categorical, so the
/// default is 0/1 equality; the absolute-difference variant serves numeric
/// sequences and hand-checked oracles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DtwCost {
    Equality,
    AbsoluteDifference,
}

/// Classic O(|x||y|) dynamic-time-warping distance. Note this is a distance
/// (0 = identical pacing and content); the similarity plots invert it.
pub fn dtw_distance(x: &[EventId], y: &[EventId], cost: DtwCost) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::numeric("dtw_distance requires non-empty sequences"));
    }
    let local = |a: EventId, b: EventId| -> f64 {
        match cost {
            DtwCost::Equality => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
            DtwCost::AbsoluteDifference => (a as f64 - b as f64).abs(),
        }
    };

    let cols = y.len() + 1;
    let mut prev = vec![f64::INFINITY; cols];
    let mut cur = vec![f64::INFINITY; cols];
    prev[0] = 0.0;
    for &xi in x {
        cur[0] = f64::INFINITY;
        for (j, &yj) in y.iter().enumerate() {
            let c = local(xi, yj);
            cur[j + 1] = c + prev[j + 1].min(cur[j]).min(prev[j]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[cols - 1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    /// How many previous batches the external mean looks back over.
    pub history: usize,
    /// Per-batch sample cap for the quadratic DTW grids.
    pub cap: usize,
    pub seed: u64,
    pub cost: DtwCost,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            history: 10,
            cap: 20,
            seed: 0,
            cost: DtwCost::Equality,
        }
    }
}

/// Per-batch similarity row. `internal` is the mean pairwise DTW distance
/// within the batch (None when the batch has fewer than two samples);
/// `external` the mean distance from this batch's samples to those of the
/// previous `history` batches (None for the first batch).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchSimilarity {
    pub batch: usize,
    pub internal: Option<f64>,
    pub external: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub rows: Vec<BatchSimilarity>,
}

fn subsample<'a>(batch: &'a [Sample], cap: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Sample> {
    if batch.len() <= cap {
        return batch.iter().collect();
    }
    let mut idx: Vec<usize> = (0..batch.len()).collect();
    idx.shuffle(rng);
    idx.truncate(cap);
    idx.sort_unstable();
    idx.into_iter().map(|i| &batch[i]).collect()
}

/// Internal vs external DTW distance per batch, deterministic given seed and
/// cap.
pub fn similarity_report(
    batches: &[Vec<Sample>],
    cfg: &SimilarityConfig,
) -> Result<SimilarityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let picked: Vec<Vec<&Sample>> = batches
        .iter()
        .map(|b| subsample(b, cfg.cap, &mut rng))
        .collect();

    let mut rows = Vec::with_capacity(batches.len());
    for (k, samples) in picked.iter().enumerate() {
        let internal = if samples.len() >= 2 {
            let mut total = 0.0;
            let mut count = 0usize;
            for i in 0..samples.len() {
                for j in i + 1..samples.len() {
                    total += dtw_distance(&samples[i].events, &samples[j].events, cfg.cost)?;
                    count += 1;
                }
            }
            Some(total / count as f64)
        } else {
            None
        };

        let external = if k > 0 {
            let from = k.saturating_sub(cfg.history);
            let mut total = 0.0;
            let mut count = 0usize;
            for history in &picked[from..k] {
                for old in history {
                    for cur in samples {
                        total += dtw_distance(&cur.events, &old.events, cfg.cost)?;
                        count += 1;
                    }
                }
            }
            (count > 0).then(|| total / count as f64)
        } else {
            None
        };

        rows.push(BatchSimilarity {
            batch: k,
            internal,
            external,
        });
    }
    Ok(SimilarityReport { rows })
}

/// Census of consecutive-batch MMD values. `stable_pairs` counts pairs with
/// MMD at or below the threshold (at zero threshold this counts exactly the
/// zero-MMD pairs); `identical_batches` counts batches whose event content
/// repeats the previous batch verbatim.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShiftCensus {
    pub mmd_values: Vec<f64>,
    pub threshold: f64,
    pub stable_pairs: usize,
    pub identical_batches: usize,
}

impl ShiftCensus {
    pub fn stable_fraction(&self) -> f64 {
        if self.mmd_values.is_empty() {
            return 0.0;
        }
        self.stable_pairs as f64 / self.mmd_values.len() as f64
    }
}

/// MMD between each consecutive batch pair, through the same code path the
/// router uses.
pub fn shift_census(
    batches: &[Vec<Sample>],
    sigma: f64,
    threshold: f64,
    vocab_size: usize,
) -> Result<ShiftCensus> {
    if batches.len() < 2 {
        return Err(Error::config("shift census needs at least 2 batches"));
    }
    let cfg = MmdConfig::new(sigma, 0.0)?;
    let snapshots: Vec<DistributionSnapshot> = batches
        .iter()
        .map(|b| DistributionSnapshot::from_samples(b, vocab_size))
        .collect();
    let mut mmd_values = Vec::with_capacity(batches.len() - 1);
    let mut stable_pairs = 0usize;
    let mut identical_batches = 0usize;
    for k in 1..batches.len() {
        let value = mmd_value(&snapshots[k - 1], &snapshots[k], &cfg)?;
        if value <= threshold {
            stable_pairs += 1;
        }
        let identical = batches[k].len() == batches[k - 1].len()
            && batches[k]
                .iter()
                .zip(&batches[k - 1])
                .all(|(a, b)| a.events == b.events);
        if identical {
            identical_batches += 1;
        }
        mmd_values.push(value);
    }
    Ok(ShiftCensus {
        mmd_values,
        threshold,
        stable_pairs,
        identical_batches,
    })
}

/// Write per-batch similarity rows as CSV.
pub fn write_similarity_csv(path: &Path, report: &SimilarityReport) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "batch,internal_dtw,external_dtw")?;
    for row in &report.rows {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        writeln!(
            w,
            "{},{},{}",
            row.batch,
            fmt(row.internal),
            fmt(row.external)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Write the per-pair MMD census as CSV.
pub fn write_census_csv(path: &Path, census: &ShiftCensus) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "pair,mmd,stable")?;
    for (k, value) in census.mmd_values.iter().enumerate() {
        writeln!(
            w,
            "{},{},{}",
            k + 1,
            value,
            u8::from(*value <= census.threshold)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Emit the frequency-vector matrix (one row per sample) for external 2-D
/// projection tools.
pub fn write_frequency_matrix(path: &Path, samples: &[Sample], vocab_size: usize) -> Result<()> {
    let dim = samples
        .iter()
        .flat_map(|s| s.events.iter().map(|&e| e + 1))
        .max()
        .unwrap_or(0)
        .max(vocab_size);
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for sample in samples {
        let v = frequency_vector(sample, dim);
        let row: Vec<String> = v.values.iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, LogHeader, SampleOrigin};

    fn sample(events: Vec<EventId>, idx: u64) -> Sample {
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
                source: "t".into(),
                start_line: 0,
                window_index: idx,
            },
        }
    }

    /// Independent recursive DP with memoization, used as the oracle.
    fn dtw_oracle(x: &[usize], y: &[usize], cost: DtwCost) -> f64 {
        fn go(
            x: &[usize],
            y: &[usize],
            i: usize,
            j: usize,
            cost: DtwCost,
            memo: &mut Vec<Vec<Option<f64>>>,
        ) -> f64 {
            if i == 0 && j == 0 {
                return 0.0;
            }
            if i == 0 || j == 0 {
                return f64::INFINITY;
            }
            if let Some(v) = memo[i][j] {
                return v;
            }
            let c = match cost {
                DtwCost::Equality => {
                    if x[i - 1] == y[j - 1] {
                        0.0
                    } else {
                        1.0
                    }
                }
                DtwCost::AbsoluteDifference => (x[i - 1] as f64 - y[j - 1] as f64).abs(),
            };
            let best = go(x, y, i - 1, j, cost, memo)
                .min(go(x, y, i, j - 1, cost, memo))
                .min(go(x, y, i - 1, j - 1, cost, memo));
            let v = c + best;
            memo[i][j] = Some(v);
            v
        }
        let mut memo = vec![vec![None; y.len() + 1]; x.len() + 1];
        go(x, y, x.len(), y.len(), cost, &mut memo)
    }

    #[test]
    fn dtw_self_distance_is_zero() {
        let x = vec![3, 1, 4, 1, 5];
        assert_eq!(dtw_distance(&x, &x, DtwCost::Equality).unwrap(), 0.0);
        assert_eq!(
            dtw_distance(&x, &x, DtwCost::AbsoluteDifference).unwrap(),
            0.0
        );
    }

    #[test]
    fn dtw_hand_computed_example() {
        // abs-difference costs: |1-2|=1, |2-2|=0, |3-2|=1; optimal path cost 2.
        let got = dtw_distance(&[1, 2, 3], &[2, 2, 2], DtwCost::AbsoluteDifference).unwrap();
        assert_eq!(got, 2.0);
        assert_eq!(
            got,
            dtw_oracle(&[1, 2, 3], &[2, 2, 2], DtwCost::AbsoluteDifference)
        );
    }

    #[test]
    fn dtw_is_symmetric_and_matches_oracle() {
        let seqs = [
            vec![0usize, 1, 2, 3],
            vec![2usize, 2, 2],
            vec![5usize],
            vec![1usize, 0, 1, 0, 1, 0],
            vec![4usize, 4, 1, 3, 2, 2, 0],
        ];
        for x in &seqs {
            for y in &seqs {
                for cost in [DtwCost::Equality, DtwCost::AbsoluteDifference] {
                    let a = dtw_distance(x, y, cost).unwrap();
                    let b = dtw_distance(y, x, cost).unwrap();
                    assert_eq!(a, b);
                    assert!((a - dtw_oracle(x, y, cost)).abs() < 1e-12);
                    assert!(a >= 0.0);
                }
            }
        }
    }

    #[test]
    fn dtw_rejects_empty_sequences() {
        assert!(dtw_distance(&[], &[1], DtwCost::Equality).is_err());
    }

    #[test]
    fn identical_samples_have_zero_internal_distance() {
        let batches: Vec<Vec<Sample>> = (0..3)
            .map(|k| {
                (0..4)
                    .map(|i| sample(vec![1, 2, 3], (k * 4 + i) as u64))
                    .collect()
            })
            .collect();
        let report = similarity_report(&batches, &SimilarityConfig::default()).unwrap();
        assert!(report.rows.iter().all(|r| r.internal == Some(0.0)));
        assert_eq!(report.rows[0].external, None);
        assert_eq!(report.rows[1].external, Some(0.0));
    }

    #[test]
    fn single_sample_batch_internal_is_flagged() {
        let batches = vec![vec![sample(vec![1, 2], 0)], vec![sample(vec![1, 2], 1)]];
        let report = similarity_report(&batches, &SimilarityConfig::default()).unwrap();
        assert_eq!(report.rows[0].internal, None);
        assert_eq!(report.rows[1].external, Some(0.0));
    }

    #[test]
    fn repetitive_regimes_have_nearer_internal_than_external() {
        // Two regimes with disjoint alphabets; within-batch samples repeat
        // the same motif so internal distance must undercut external.
        let mk = |base: usize, k: usize| -> Vec<Sample> {
            (0..5)
                .map(|i| {
                    sample(
                        vec![base, base + 1, base + 2, base, base + 1],
                        (k * 5 + i) as u64,
                    )
                })
                .collect()
        };
        let batches = vec![mk(0, 0), mk(0, 1), mk(10, 2), mk(10, 3)];
        let report = similarity_report(&batches, &SimilarityConfig::default()).unwrap();
        let mean_internal: f64 = report.rows.iter().filter_map(|r| r.internal).sum::<f64>() / 4.0;
        let externals: Vec<f64> = report.rows.iter().filter_map(|r| r.external).collect();
        let mean_external: f64 = externals.iter().sum::<f64>() / externals.len() as f64;
        assert!(
            mean_internal < mean_external,
            "{mean_internal} !< {mean_external}"
        );
    }

    #[test]
    fn census_counts_identical_and_stable_pairs() {
        let a: Vec<Sample> = (0..3).map(|i| sample(vec![0, 1], i)).collect();
        let b = a.clone();
        let c: Vec<Sample> = (0..3).map(|i| sample(vec![4, 5], 3 + i)).collect();
        let census = shift_census(&[a, b, c], 1.0, 0.001, 6).unwrap();
        assert_eq!(census.mmd_values.len(), 2);
        assert_eq!(census.identical_batches, 1);
        assert_eq!(census.stable_pairs, 1);
        assert!(census.mmd_values[1] > 0.001);
    }

    #[test]
    fn zero_threshold_counts_only_exact_zero_pairs() {
        let a: Vec<Sample> = (0..2).map(|i| sample(vec![0, 1], i)).collect();
        let b = a.clone();
        let mut c = a.clone();
        c[0].events = vec![0, 0];
        let census = shift_census(&[a, b, c], 1.0, 0.0, 2).unwrap();
        assert_eq!(census.stable_pairs, 1);
        assert_eq!(census.mmd_values[0], 0.0);
        assert!(census.mmd_values[1] > 0.0);
    }

    #[test]
    fn census_mmd_matches_drift_code_path() {
        let a: Vec<Sample> = (0..3).map(|i| sample(vec![0, 1, 1], i)).collect();
        let b: Vec<Sample> = (0..3).map(|i| sample(vec![1, 2, 2], 3 + i)).collect();
        let census = shift_census(&[a.clone(), b.clone()], 2.0, 0.001, 3).unwrap();
        let cfg = MmdConfig::new(2.0, 0.0).unwrap();
        let direct = mmd_value(
            &DistributionSnapshot::from_samples(&a, 3),
            &DistributionSnapshot::from_samples(&b, 3),
            &cfg,
        )
        .unwrap();
        assert_eq!(census.mmd_values[0], direct);
    }

    #[test]
    fn similarity_is_deterministic_given_seed_and_cap() {
        let batches: Vec<Vec<Sample>> = (0..4)
            .map(|k| {
                (0..30)
                    .map(|i| sample(vec![i % 5, (i + k) % 5, i % 3], (k * 30 + i) as u64))
                    .collect()
            })
            .collect();
        let cfg = SimilarityConfig {
            history: 2,
            cap: 8,
            seed: 13,
            cost: DtwCost::Equality,
        };
        let a = similarity_report(&batches, &cfg).unwrap();
        let b = similarity_report(&batches, &cfg).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.internal, rb.internal);
            assert_eq!(ra.external, rb.external);
        }
    }
}
