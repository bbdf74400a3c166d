//! Seeded regime-shift log generator. Each regime walks a Markov chain over
//! its own event alphabet; regime changes produce the distribution shifts
//! the router must catch, and injected anomalies (forbidden transitions or
//! alien events) carry ground-truth labels. The generator also renders the
//! stream as a generic-format raw log file so the full file pipeline can be
//! driven end to end.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EventId, Label, LogHeader, Sample, SampleOrigin};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnomalyKind {
    /// Jump to an event the regime's transition matrix forbids.
    ForbiddenTransition,
    /// Insert an event outside every regime's alphabet.
    AlienEvent,
}

impl AnomalyKind {
    pub fn parse_name(name: &str) -> Result<Self> {
        match name {
            "forbidden" => Ok(AnomalyKind::ForbiddenTransition),
            "alien" => Ok(AnomalyKind::AlienEvent),
            other => Err(Error::config(format!("unknown anomaly kind `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AnomalyKind::ForbiddenTransition => "forbidden",
            AnomalyKind::AlienEvent => "alien",
        }
    }
}

/// One stationary regime: an event alphabet, a row-stochastic transition
/// matrix over it, and how many samples it lasts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub alphabet: Vec<EventId>,
    pub transition: Vec<Vec<f64>>,
    pub duration: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub regimes: Vec<RegimeSpec>,
    /// Per-sample probability of carrying one injected anomaly.
    pub anomaly_rate: f64,
    pub anomaly: AnomalyKind,
    /// Events per sample.
    pub sample_len: usize,
    pub seed: u64,
    /// Block size (in samples) for stability repetition; 0 disables it.
    pub repeat_block: usize,
    /// Fraction of blocks emitted as verbatim event-copies of the previous
    /// block (the stable portion of the stream).
    pub repeat_fraction: f64,
}

impl SyntheticSpec {
    /// Build a spec from scalars: `regimes` disjoint alphabets of
    /// `alphabet_size` events each, ring-structured transition matrices with
    /// `branching` equally likely successors per state. One positional arg
    /// per `[synth]` config key.
    #[allow(clippy::too_many_arguments)]
    pub fn from_scalars(
        regimes: usize,
        alphabet_size: usize,
        branching: usize,
        duration: usize,
        sample_len: usize,
        anomaly_rate: f64,
        anomaly: AnomalyKind,
        seed: u64,
        repeat_block: usize,
        repeat_fraction: f64,
    ) -> Result<Self> {
        if regimes == 0 || alphabet_size < 2 {
            return Err(Error::config("need >= 1 regime and alphabet >= 2"));
        }
        if branching == 0 || branching >= alphabet_size {
            return Err(Error::config(
                "branching must be in [1, alphabet_size) so forbidden successors exist",
            ));
        }
        let specs = (0..regimes)
            .map(|r| {
                let alphabet: Vec<EventId> = (r * alphabet_size..(r + 1) * alphabet_size).collect();
                // State s may move to s+1 .. s+branching (mod A).
                let transition = (0..alphabet_size)
                    .map(|s| {
                        let mut row = vec![0.0; alphabet_size];
                        for j in 1..=branching {
                            row[(s + j) % alphabet_size] = 1.0 / branching as f64;
                        }
                        row
                    })
                    .collect();
                RegimeSpec {
                    alphabet,
                    transition,
                    duration,
                }
            })
            .collect();
        Ok(Self {
            regimes: specs,
            anomaly_rate,
            anomaly,
            sample_len,
            seed,
            repeat_block,
            repeat_fraction,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() {
            return Err(Error::config("synthetic spec needs at least one regime"));
        }
        if self.sample_len < 2 {
            return Err(Error::config("sample_len must be >= 2"));
        }
        if !(0.0..=1.0).contains(&self.anomaly_rate) {
            return Err(Error::config("anomaly_rate must be in [0, 1]"));
        }
        for (r, regime) in self.regimes.iter().enumerate() {
            let a = regime.alphabet.len();
            if a == 0 || regime.transition.len() != a {
                return Err(Error::config(format!(
                    "regime {r}: transition matrix must be square over the alphabet"
                )));
            }
            for (s, row) in regime.transition.iter().enumerate() {
                if row.len() != a {
                    return Err(Error::config(format!(
                        "regime {r}: row {s} has wrong length"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if !(sum.is_finite() && (sum - 1.0).abs() < 1e-9) || row.iter().any(|&p| p < 0.0) {
                    return Err(Error::config(format!(
                        "regime {r}: row {s} is not a probability distribution (sum {sum})"
                    )));
                }
                if self.anomaly == AnomalyKind::ForbiddenTransition
                    && self.anomaly_rate > 0.0
                    && !row.contains(&0.0)
                {
                    return Err(Error::config(format!(
                        "regime {r}: row {s} forbids nothing; forbidden-transition anomalies are impossible"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The reserved event id used for alien-event anomalies.
    pub fn alien_event(&self) -> EventId {
        self.regimes
            .iter()
            .flat_map(|r| r.alphabet.iter().copied())
            .max()
            .map_or(0, |m| m + 1)
    }
}

/// Generated stream plus ground truth for routing evaluation.
#[derive(Clone, Debug)]
pub struct SyntheticStream {
    pub samples: Vec<Sample>,
    /// Sample indices where a new regime starts (first regime excluded).
    pub shift_points: Vec<usize>,
    pub alien_event: EventId,
}

struct SampleDraft {
    events: Vec<EventId>,
    /// Seconds between consecutive records (index 0 is the gap to the
    /// previous sample's last record).
    gaps: Vec<i64>,
    levels: Vec<u32>,
    label: Label,
}

const NORMAL_GAP: i64 = 1;
const ANOMALY_GAP: i64 = 900;
const NORMAL_LEVEL: u32 = 0;
const ANOMALY_LEVEL: u32 = 1;

fn draw_sample(
    regime: &RegimeSpec,
    state: &mut usize,
    spec: &SyntheticSpec,
    rng: &mut ChaCha8Rng,
) -> SampleDraft {
    let a = regime.alphabet.len();
    let inject = spec.anomaly_rate > 0.0 && rng.random_bool(spec.anomaly_rate);
    let inject_at = if inject {
        rng.random_range(1..spec.sample_len)
    } else {
        usize::MAX
    };

    let mut events = Vec::with_capacity(spec.sample_len);
    let mut gaps = Vec::with_capacity(spec.sample_len);
    let mut levels = Vec::with_capacity(spec.sample_len);
    for pos in 0..spec.sample_len {
        if pos == inject_at {
            match spec.anomaly {
                AnomalyKind::ForbiddenTransition => {
                    let forbidden: Vec<usize> = (0..a)
                        .filter(|&j| regime.transition[*state][j] == 0.0)
                        .collect();
                    let next = forbidden[rng.random_range(0..forbidden.len())];
                    *state = next;
                    events.push(regime.alphabet[next]);
                }
                AnomalyKind::AlienEvent => {
                    events.push(spec.alien_event());
                }
            }
            gaps.push(ANOMALY_GAP);
            levels.push(ANOMALY_LEVEL);
            continue;
        }
        let row = &regime.transition[*state];
        let mut pick = rng.random_range(0.0..1.0);
        let mut next = a - 1;
        for (j, &p) in row.iter().enumerate() {
            if pick < p {
                next = j;
                break;
            }
            pick -= p;
        }
        *state = next;
        events.push(regime.alphabet[next]);
        gaps.push(NORMAL_GAP);
        levels.push(NORMAL_LEVEL);
    }
    SampleDraft {
        events,
        gaps,
        levels,
        label: if inject {
            Label::Abnormal
        } else {
            Label::Normal
        },
    }
}

/// Generate the labeled sample stream and its true shift points.
pub fn synthesize(spec: &SyntheticSpec) -> Result<SyntheticStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples: Vec<Sample> = Vec::new();
    let mut shift_points = Vec::new();
    let mut clock: i64 = 1_000_000;
    let mut emitted_blocks = 0usize;
    let mut copied_blocks = 0usize;

    let block = spec.repeat_block;
    for (r, regime) in spec.regimes.iter().enumerate() {
        if block > 0 && regime.duration % block != 0 {
            return Err(Error::config(format!(
                "regime {r}: duration {} not divisible by repeat_block {block}",
                regime.duration
            )));
        }
        if r > 0 {
            shift_points.push(samples.len());
        }
        let mut state = 0usize;
        let mut emitted_in_regime = 0usize;
        while emitted_in_regime < regime.duration {
            let chunk = if block > 0 { block } else { regime.duration };
            // Stability pattern: block i repeats the previous block when the
            // running fraction of copies lags repeat_fraction.
            let want_copy = block > 0
                && emitted_in_regime > 0
                && ((copied_blocks + 1) as f64 / (emitted_blocks + 1) as f64)
                    <= spec.repeat_fraction;
            let drafts: Vec<SampleDraft> = if want_copy {
                copied_blocks += 1;
                let prev = &samples[samples.len() - chunk..];
                prev.iter()
                    .map(|s| SampleDraft {
                        events: s.events.clone(),
                        gaps: {
                            let mut gaps = Vec::with_capacity(s.headers.len());
                            let mut last = None;
                            for h in &s.headers {
                                gaps.push(last.map_or(NORMAL_GAP, |p: i64| h.timestamp - p));
                                last = Some(h.timestamp);
                            }
                            gaps
                        },
                        levels: s.headers.iter().map(|h| h.level).collect(),
                        label: s.label.unwrap_or(Label::Normal),
                    })
                    .collect()
            } else {
                (0..chunk)
                    .map(|_| draw_sample(regime, &mut state, spec, &mut rng))
                    .collect()
            };
            emitted_blocks += 1;

            for draft in drafts {
                let window_index = samples.len() as u64;
                let start_line = window_index * spec.sample_len as u64 + 1;
                let mut headers = Vec::with_capacity(draft.events.len());
                for (gap, level) in draft.gaps.iter().zip(&draft.levels) {
                    clock += gap;
                    headers.push(LogHeader {
                        timestamp: clock,
                        component: (headers.len() % 4) as u32,
                        level: *level,
                    });
                }
                samples.push(Sample {
                    events: draft.events,
                    headers,
                    label: Some(draft.label),
                    origin: SampleOrigin {
                        source: "synthetic".into(),
                        start_line,
                        window_index,
                    },
                });
                emitted_in_regime += 1;
            }
        }
    }

    Ok(SyntheticStream {
        samples,
        shift_points,
        alien_event: spec.alien_event(),
    })
}

/// Render the stream as a generic-format raw log: one line per record,
/// `<label> <epoch> <component> <level> <body>`. Each event id maps to a
/// distinct three-token body so template mining recovers one template per
/// event.
pub fn write_generic_log(path: &Path, stream: &SyntheticStream) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for sample in &stream.samples {
        for (&event, header) in sample.events.iter().zip(&sample.headers) {
            // Record-level labels: only the injected record is marked, which
            // the any-abnormal window rule folds back into a sample label.
            let is_anomalous_record =
                sample.label == Some(Label::Abnormal) && header.level == ANOMALY_LEVEL;
            let label = if is_anomalous_record { "FAULT" } else { "-" };
            let level = if header.level == ANOMALY_LEVEL {
                "ALERT"
            } else {
                "INFO"
            };
            writeln!(
                w,
                "{label} {} comp{} {level} ev{event}x begin phase{event}y end",
                header.timestamp, header.component
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write the ground-truth shift points (sample indices), one per line.
pub fn write_shift_points(path: &Path, stream: &SyntheticStream) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "sample_index")?;
    for p in &stream.shift_points {
        writeln!(w, "{p}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_spec(regimes: usize, rate: f64, kind: AnomalyKind, seed: u64) -> SyntheticSpec {
        SyntheticSpec::from_scalars(regimes, 8, 3, 40, 12, rate, kind, seed, 0, 0.0).unwrap()
    }

    #[test]
    fn single_regime_zero_rate_is_all_normal_with_no_shifts() {
        let stream = synthesize(&scalar_spec(1, 0.0, AnomalyKind::AlienEvent, 5)).unwrap();
        assert_eq!(stream.samples.len(), 40);
        assert!(stream.shift_points.is_empty());
        assert!(stream
            .samples
            .iter()
            .all(|s| s.label == Some(Label::Normal)));
        assert!(stream.samples.iter().all(|s| s.events.len() == 12));
    }

    #[test]
    fn disjoint_regimes_emit_unseen_events_after_shift() {
        let stream = synthesize(&scalar_spec(2, 0.0, AnomalyKind::AlienEvent, 5)).unwrap();
        assert_eq!(stream.shift_points, vec![40]);
        let first: std::collections::BTreeSet<_> = stream.samples[..40]
            .iter()
            .flat_map(|s| s.events.iter().copied())
            .collect();
        let second: std::collections::BTreeSet<_> = stream.samples[40..]
            .iter()
            .flat_map(|s| s.events.iter().copied())
            .collect();
        assert!(first.iter().all(|e| *e < 8));
        assert!(second.iter().all(|e| *e >= 8));
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = synthesize(&scalar_spec(3, 0.1, AnomalyKind::ForbiddenTransition, 77)).unwrap();
        let b = synthesize(&scalar_spec(3, 0.1, AnomalyKind::ForbiddenTransition, 77)).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.shift_points, b.shift_points);
    }

    #[test]
    fn forbidden_transitions_are_actually_forbidden() {
        let spec = scalar_spec(1, 0.5, AnomalyKind::ForbiddenTransition, 3);
        let regime = &spec.regimes[0];
        let stream = synthesize(&spec).unwrap();
        let mut saw_anomaly = false;
        for sample in &stream.samples {
            if sample.label != Some(Label::Abnormal) {
                // Normal samples only take allowed transitions.
                for pair in sample.events.windows(2) {
                    let (s, t) = (pair[0], pair[1]);
                    assert!(
                        regime.transition[s][t] > 0.0,
                        "illegal transition {s}->{t} in a normal sample"
                    );
                }
            } else {
                saw_anomaly = true;
            }
        }
        assert!(saw_anomaly);
    }

    #[test]
    fn alien_events_stay_out_of_normal_samples() {
        let spec = scalar_spec(2, 0.3, AnomalyKind::AlienEvent, 9);
        let alien = spec.alien_event();
        let stream = synthesize(&spec).unwrap();
        assert_eq!(alien, 16);
        for sample in &stream.samples {
            let has_alien = sample.events.contains(&alien);
            assert_eq!(has_alien, sample.label == Some(Label::Abnormal));
        }
    }

    #[test]
    fn repeat_blocks_duplicate_event_content() {
        let spec =
            SyntheticSpec::from_scalars(1, 8, 3, 40, 10, 0.0, AnomalyKind::AlienEvent, 11, 5, 0.6)
                .unwrap();
        let stream = synthesize(&spec).unwrap();
        let blocks: Vec<Vec<Vec<EventId>>> = stream
            .samples
            .chunks(5)
            .map(|c| c.iter().map(|s| s.events.clone()).collect())
            .collect();
        let copies = blocks.windows(2).filter(|w| w[0] == w[1]).count();
        // 8 blocks total; the pattern keeps the running copy fraction at 0.6.
        assert!(
            copies >= 3,
            "expected several duplicated blocks, got {copies}"
        );
        // Timestamps keep advancing even inside copies.
        for pair in stream.samples.windows(2) {
            assert!(pair[1].headers[0].timestamp > pair[0].headers[0].timestamp);
        }
    }

    #[test]
    fn degenerate_matrix_is_rejected() {
        let mut spec = scalar_spec(1, 0.0, AnomalyKind::AlienEvent, 1);
        spec.regimes[0].transition[2] = vec![0.0; 8];
        assert!(synthesize(&spec).is_err());
        // Full rows make forbidden-transition injection impossible.
        assert!(SyntheticSpec::from_scalars(
            1,
            4,
            4,
            10,
            8,
            0.1,
            AnomalyKind::ForbiddenTransition,
            1,
            0,
            0.0
        )
        .is_err());
    }

    #[test]
    fn generic_log_round_trips_through_the_parser() {
        let spec = scalar_spec(2, 0.2, AnomalyKind::ForbiddenTransition, 21);
        let stream = synthesize(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.log");
        write_generic_log(&path, &stream).unwrap();

        let parsed = crate::corpus::parse_log_file(
            &path,
            crate::corpus::DatasetKind::Generic,
            &crate::corpus::DrainConfig::default(),
        )
        .unwrap();
        assert_eq!(parsed.records.len(), stream.samples.len() * spec.sample_len);
        assert_eq!(parsed.stats.quarantined, 0);
        // One template per distinct event id.
        let distinct: std::collections::BTreeSet<_> = stream
            .samples
            .iter()
            .flat_map(|s| s.events.iter().copied())
            .collect();
        assert_eq!(parsed.vocab.len(), distinct.len());

        let windows = crate::corpus::sliding_windows(
            &parsed.records,
            &parsed.record_labels,
            spec.sample_len,
            spec.sample_len,
            "t",
        )
        .unwrap();
        assert_eq!(windows.len(), stream.samples.len());
        for (w, s) in windows.iter().zip(&stream.samples) {
            assert_eq!(w.label, s.label);
        }
    }
}
