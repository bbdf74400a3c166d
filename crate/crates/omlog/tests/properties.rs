//! Property tests for the contracts each module states: determinism,
//! append-only vocabularies, partition laws, estimator symmetries, ranking
//! invariances, and routing monotonicity.

use proptest::prelude::*;

use omlog::analysis::{dtw_distance, DtwCost};
use omlog::corpus::{
    parse_lines, sliding_windows, DatasetKind, DrainConfig, Label, LogHeader, Sample, SampleOrigin,
};
use omlog::detectors::top_k_contains;
use omlog::drift::{decide, gaussian_kernel, mmd_value, DistributionSnapshot, MmdConfig, Route};
use omlog::features::{frequency_vector, next_event_pairs, FrequencyVector};
use omlog::meta::{build_meta_tasks, EpisodeConfig, Objective};
use omlog::pipeline::Metrics;

fn sample_of(events: Vec<usize>, idx: u64) -> Sample {
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
            source: "prop".into(),
            start_line: 1,
            window_index: idx,
        },
    }
}

/// Random log bodies drawn from a small phrase pool, some with numeric
/// parameters.
fn line_pool() -> Vec<String> {
    let mut pool = Vec::new();
    for i in 0..6 {
        pool.push(format!("service worker{i} heartbeat ok"));
        pool.push(format!("opened session for node{i} port 81{i}2"));
        pool.push(format!("flushed {i}00 entries to segment {i}"));
        pool.push("cache rebuild complete".to_string());
    }
    pool
}

fn render_stream(choices: &[usize]) -> Vec<(u64, String)> {
    let pool = line_pool();
    choices
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            (
                i as u64 + 1,
                format!("- {} comp{} INFO {}", 100 + i, c % 3, pool[c % pool.len()]),
            )
        })
        .collect()
}

fn snapshot_from(vectors: Vec<Vec<f64>>) -> DistributionSnapshot {
    let event_types = vectors
        .iter()
        .flat_map(|v| {
            v.iter()
                .enumerate()
                .filter(|(_, x)| **x != 0.0)
                .map(|(i, _)| i)
        })
        .collect();
    DistributionSnapshot {
        vectors: vectors
            .into_iter()
            .map(|values| FrequencyVector { values })
            .collect(),
        event_types,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reparsing_is_deterministic(choices in prop::collection::vec(0usize..24, 1..120)) {
        let lines = render_stream(&choices);
        let a = parse_lines(lines.clone(), DatasetKind::Generic, &DrainConfig::default()).unwrap();
        let b = parse_lines(lines, DatasetKind::Generic, &DrainConfig::default()).unwrap();
        prop_assert_eq!(&a.records, &b.records);
        let ta: Vec<String> = a.vocab.iter().map(|e| e.template_string()).collect();
        let tb: Vec<String> = b.vocab.iter().map(|e| e.template_string()).collect();
        prop_assert_eq!(ta, tb);
    }

    #[test]
    fn vocabulary_ids_are_prefix_stable(choices in prop::collection::vec(0usize..24, 2..120), cut in 1usize..119) {
        let cut = cut.min(choices.len() - 1);
        let full_lines = render_stream(&choices);
        let prefix_lines = full_lines[..cut].to_vec();
        let full = parse_lines(full_lines, DatasetKind::Generic, &DrainConfig::default()).unwrap();
        let prefix = parse_lines(prefix_lines, DatasetKind::Generic, &DrainConfig::default()).unwrap();
        // Later lines never reassign the event ids chosen for the prefix.
        for (p, f) in prefix.records.iter().zip(&full.records) {
            prop_assert_eq!(p.event_id, f.event_id);
        }
        prop_assert!(full.vocab.len() >= prefix.vocab.len());
    }

    #[test]
    fn params_match_placeholder_counts(choices in prop::collection::vec(0usize..24, 1..100)) {
        let parsed = parse_lines(render_stream(&choices), DatasetKind::Generic, &DrainConfig::default()).unwrap();
        for record in &parsed.records {
            let template = parsed.vocab.get(record.event_id).unwrap();
            prop_assert_eq!(record.params.len(), template.placeholder_count());
        }
    }

    #[test]
    fn windows_with_equal_step_partition_the_stream(choices in prop::collection::vec(0usize..24, 1..150), size in 1usize..20) {
        let parsed = parse_lines(render_stream(&choices), DatasetKind::Generic, &DrainConfig::default()).unwrap();
        let windows = sliding_windows(&parsed.records, &parsed.record_labels, size, size, "p").unwrap();
        let rebuilt: Vec<usize> = windows.iter().flat_map(|w| w.events.iter().copied()).collect();
        let expected: Vec<usize> = parsed.records[..windows.len() * size].iter().map(|r| r.event_id).collect();
        prop_assert_eq!(rebuilt, expected);
        prop_assert!(parsed.records.len() - windows.len() * size < size);
    }

    #[test]
    fn pair_count_is_len_minus_h(events in prop::collection::vec(0usize..8, 0..40), h in 1usize..6) {
        let n = events.len();
        let pairs = next_event_pairs(&sample_of(events, 0), h);
        prop_assert_eq!(pairs.len(), n.saturating_sub(h));
        for pair in &pairs {
            prop_assert_eq!(pair.window.len(), h);
        }
    }

    #[test]
    fn frequency_vector_sees_only_the_multiset(events in prop::collection::vec(0usize..10, 1..50), seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = events.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = frequency_vector(&sample_of(events, 0), 10);
        let b = frequency_vector(&sample_of(shuffled, 1), 10);
        prop_assert_eq!(a, b);
        }

    #[test]
    fn zero_padding_never_changes_the_kernel(u in prop::collection::vec(0.0f64..1.0, 1..8), v in prop::collection::vec(0.0f64..1.0, 1..8), pad in 0usize..6) {
        let mut up = u.clone();
        let mut vp = v.clone();
        up.extend(std::iter::repeat_n(0.0, pad));
        vp.extend(std::iter::repeat_n(0.0, pad + 2));
        prop_assert_eq!(gaussian_kernel(&u, &v, 1.5), gaussian_kernel(&up, &vp, 1.5));
    }

    #[test]
    fn mmd_is_symmetric_and_zero_on_self(
        p in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..12),
        q in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..12),
        sigma in 0.2f64..3.0,
    ) {
        let cfg = MmdConfig::new(sigma, 0.0).unwrap();
        let sp = snapshot_from(p);
        let sq = snapshot_from(q);
        prop_assert_eq!(mmd_value(&sp, &sq, &cfg).unwrap(), mmd_value(&sq, &sp, &cfg).unwrap());
        prop_assert!(mmd_value(&sp, &sp, &cfg).unwrap() <= 1e-12);
    }

    #[test]
    fn raising_epsilon_never_flips_offline_to_online(
        p in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..10),
        q in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..10),
        eps_low in 0.0f64..0.5,
        eps_extra in 0.0f64..0.5,
    ) {
        let sp = snapshot_from(p);
        let sq = snapshot_from(q);
        let low = decide(&sp, &sq, 8, &MmdConfig::new(1.0, eps_low).unwrap()).unwrap();
        let high = decide(&sp, &sq, 8, &MmdConfig::new(1.0, eps_low + eps_extra).unwrap()).unwrap();
        if low.route == Route::Offline {
            prop_assert_eq!(high.route, Route::Offline);
        }
        // Determinism of the decision.
        let again = decide(&sp, &sq, 8, &MmdConfig::new(1.0, eps_low).unwrap()).unwrap();
        prop_assert_eq!(low, again);
    }

    #[test]
    fn top_k_is_invariant_under_monotone_transforms(
        logits in prop::collection::vec(-100i32..100, 2..12),
        k in 1usize..6,
        target_idx in 0usize..12,
        scale_pick in 0usize..3,
        shift_pick in 0usize..3,
    ) {
        let target = target_idx % logits.len();
        let base: Vec<f64> = logits.iter().map(|&v| f64::from(v)).collect();
        // Exactly representable affine transforms preserve ranking and ties.
        let scale = [0.5, 2.0, 4.0][scale_pick];
        let shift = [-3.0, 0.0, 7.5][shift_pick];
        let transformed: Vec<f64> = base.iter().map(|&v| v * scale + shift).collect();
        prop_assert_eq!(
            top_k_contains(&base, k, target),
            top_k_contains(&transformed, k, target)
        );
    }

    #[test]
    fn meta_tasks_partition_and_respect_normals(
        batch_len in 1usize..40,
        t in 1usize..12,
        n in 0usize..10,
        normal_mask in prop::collection::vec(prop::bool::ANY, 40),
    ) {
        let batch: Vec<Sample> = (0..batch_len).map(|i| sample_of(vec![0, 1, 2], i as u64)).collect();
        let normals: Vec<usize> = (0..batch_len).filter(|&i| normal_mask[i]).collect();
        let cfg = EpisodeConfig {
            tasks_per_batch: t,
            support_size: n,
            inner_epochs: 1,
            inner_lr: 0.1,
            objective: Objective::CrossEntropy,
        };
        let tasks = build_meta_tasks(&batch, &normals, &cfg);
        // Exact partition in order.
        let covered: Vec<usize> = tasks.iter().flat_map(|t| t.query.clone()).collect();
        prop_assert_eq!(covered, (0..batch_len).collect::<Vec<_>>());
        // Slice sizes differ by at most one.
        let sizes: Vec<usize> = tasks.iter().map(|t| t.query.len()).collect();
        let min = sizes.iter().min().unwrap();
        let max = sizes.iter().max().unwrap();
        prop_assert!(max - min <= 1);
        // Supports come only from the filtered normals, at most n of them.
        for task in &tasks {
            prop_assert!(task.support.len() <= n);
            for s in &task.support {
                prop_assert!(normals.contains(s));
            }
        }
    }

    #[test]
    fn metrics_identities_hold(tp in 0u64..1000, fp in 0u64..1000, tn in 0u64..1000, fn_ in 0u64..1000) {
        let m = Metrics::from_counts(tp, fp, tn, fn_);
        if tp + fp > 0 {
            prop_assert_eq!(m.precision, tp as f64 / (tp + fp) as f64);
        }
        if tp + fn_ > 0 {
            prop_assert_eq!(m.recall, tp as f64 / (tp + fn_) as f64);
        }
        if m.precision + m.recall > 0.0 {
            prop_assert_eq!(m.f1, 2.0 * m.precision * m.recall / (m.precision + m.recall));
        } else {
            prop_assert_eq!(m.f1, 0.0);
        }
    }

    #[test]
    fn dtw_is_a_symmetric_nonnegative_self_zero_distance(
        x in prop::collection::vec(0usize..6, 1..12),
        y in prop::collection::vec(0usize..6, 1..12),
    ) {
        for cost in [DtwCost::Equality, DtwCost::AbsoluteDifference] {
            let a = dtw_distance(&x, &y, cost).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert_eq!(a, dtw_distance(&y, &x, cost).unwrap());
            prop_assert_eq!(dtw_distance(&x, &x, cost).unwrap(), 0.0);
        }
    }
}
