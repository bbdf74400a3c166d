//! Distribution shift detection: per-batch routing between fast offline
//! inference and online meta-detection, driven by a Gaussian-kernel maximum
//! mean discrepancy between the previous and current batch plus a new-event
//! check.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{EventId, Sample};
use crate::error::{Error, Result};
use crate::features::{frequency_vector, FrequencyVector};

/// Frequency-vector view of one batch of samples, plus the set of event
/// types it contains.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionSnapshot {
    pub vectors: Vec<FrequencyVector>,
    pub event_types: BTreeSet<EventId>,
}

impl DistributionSnapshot {
    /// Build from a batch. `vocab_size` fixes the histogram dimension and is
    /// raised to cover any event beyond the current vocabulary.
    pub fn from_samples(samples: &[Sample], vocab_size: usize) -> Self {
        let mut event_types = BTreeSet::new();
        let mut dim = vocab_size;
        for s in samples {
            for &e in &s.events {
                event_types.insert(e);
                dim = dim.max(e + 1);
            }
        }
        let vectors = samples.iter().map(|s| frequency_vector(s, dim)).collect();
        Self {
            vectors,
            event_types,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Kernel bandwidth and routing threshold, produced by [`calibrate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub sigma: f64,
    pub epsilon: f64,
}

impl MmdConfig {
    pub fn new(sigma: f64, epsilon: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::config(format!(
                "sigma must be finite and > 0, got {sigma}"
            )));
        }
        if epsilon < 0.0 || epsilon.is_nan() {
            return Err(Error::config(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        Ok(Self { sigma, epsilon })
    }
}

/// Which path a batch takes, with the signals that decided it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    Online,
    Offline,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub route: Route,
    pub mmd: f64,
    pub new_events: bool,
}

/// Gaussian kernel `exp(-||u - v||^2 / sigma)` over zero-padded vectors.
pub fn gaussian_kernel(u: &[f64], v: &[f64], sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    (-squared_distance(u, v) / sigma).exp()
}

/// Squared Euclidean distance treating missing trailing dimensions as zero.
fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    let shared = u.len().min(v.len());
    let mut acc = 0.0;
    for i in 0..shared {
        let d = u[i] - v[i];
        acc += d * d;
    }
    for &x in &u[shared..] {
        acc += x * x;
    }
    for &x in &v[shared..] {
        acc += x * x;
    }
    acc
}

/// Grid sum `Σij k(a_i, b_j)` accumulated in an order that does not depend
/// on which argument comes first: equal-size grids pair (i,j) with (j,i),
/// unequal grids put the smaller snapshot on the outer loop. With a == b
/// (bitwise) this walks exactly the same additions as the cross grid, so
/// the estimator of two identical snapshots cancels to exactly zero.
fn sym_grid_sum(a: &DistributionSnapshot, b: &DistributionSnapshot, sigma: f64) -> f64 {
    let mut acc = 0.0;
    if a.len() == b.len() {
        let n = a.len();
        for i in 0..n {
            acc += gaussian_kernel(&a.vectors[i].values, &b.vectors[i].values, sigma);
        }
        for i in 0..n {
            for j in i + 1..n {
                acc += gaussian_kernel(&a.vectors[i].values, &b.vectors[j].values, sigma)
                    + gaussian_kernel(&a.vectors[j].values, &b.vectors[i].values, sigma);
            }
        }
    } else {
        let (outer, inner) = if a.len() < b.len() { (a, b) } else { (b, a) };
        for u in &outer.vectors {
            for v in &inner.vectors {
                acc += gaussian_kernel(&u.values, &v.values, sigma);
            }
        }
    }
    acc
}

/// Biased kernel MMD estimator between two snapshots:
/// `(1/p^2) ΣΣ k(Pi,Pj) - (2/pq) ΣΣ k(Pi,Qj) + (1/q^2) ΣΣ k(Qi,Qj)`,
/// diagonal terms included, clamped at zero against floating-point noise.
/// Symmetric bit for bit, and exactly zero on identical snapshots.
pub fn mmd_value(
    p: &DistributionSnapshot,
    q: &DistributionSnapshot,
    cfg: &MmdConfig,
) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::numeric("mmd_value requires non-empty snapshots"));
    }
    let np = p.len() as f64;
    let nq = q.len() as f64;

    let t_pp = sym_grid_sum(p, p, cfg.sigma) / (np * np);
    let t_qq = sym_grid_sum(q, q, cfg.sigma) / (nq * nq);
    let t_pq = 2.0 * sym_grid_sum(p, q, cfg.sigma) / (np * nq);
    let (lo, hi) = if t_pp <= t_qq {
        (t_pp, t_qq)
    } else {
        (t_qq, t_pp)
    };
    Ok(((lo + hi) - t_pq).max(0.0))
}

/// How many vectors the sigma heuristic samples at most.
const SIGMA_SUBSAMPLE: usize = 256;

/// Median heuristic for the kernel bandwidth: median pairwise squared
/// distance over a bounded, evenly-strided subsample of training vectors.
/// Falls back to 1.0 when the median is zero (all-identical vectors).
fn median_sigma(batches: &[DistributionSnapshot]) -> f64 {
    let all: Vec<&FrequencyVector> = batches.iter().flat_map(|b| b.vectors.iter()).collect();
    if all.len() < 2 {
        return 1.0;
    }
    let stride = all.len().div_ceil(SIGMA_SUBSAMPLE);
    let sampled: Vec<&FrequencyVector> = all.iter().step_by(stride).copied().collect();
    let mut dists = Vec::with_capacity(sampled.len() * (sampled.len() - 1) / 2);
    for i in 0..sampled.len() {
        for j in i + 1..sampled.len() {
            dists.push(squared_distance(&sampled[i].values, &sampled[j].values));
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Calibrate sigma (median heuristic) and epsilon (one tenth of the mean MMD
/// over consecutive training-batch pairs) from the training stream.
pub fn calibrate(train_batches: &[DistributionSnapshot]) -> Result<MmdConfig> {
    if train_batches.len() < 2 {
        return Err(Error::config(
            "calibration needs at least 2 training batches",
        ));
    }
    calibrate_with_sigma(train_batches, median_sigma(train_batches))
}

/// Epsilon calibration with a caller-supplied bandwidth.
pub fn calibrate_with_sigma(
    train_batches: &[DistributionSnapshot],
    sigma: f64,
) -> Result<MmdConfig> {
    if train_batches.len() < 2 {
        return Err(Error::config(
            "calibration needs at least 2 training batches",
        ));
    }
    let probe = MmdConfig::new(sigma, 0.0)?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for pair in train_batches.windows(2) {
        total += mmd_value(&pair[0], &pair[1], &probe)?;
        pairs += 1;
    }
    let epsilon = total / pairs as f64 / 10.0;
    MmdConfig::new(sigma, epsilon)
}

/// Route the current batch: online when it contains event types beyond the
/// known vocabulary, or when its MMD against the previous batch exceeds
/// epsilon; offline otherwise.
pub fn decide(
    prev: &DistributionSnapshot,
    cur: &DistributionSnapshot,
    known_vocab_size: usize,
    cfg: &MmdConfig,
) -> Result<RouteDecision> {
    let new_events = cur.event_types.iter().any(|&e| e >= known_vocab_size);
    let mmd = mmd_value(prev, cur, cfg)?;
    let route = if new_events || mmd > cfg.epsilon {
        Route::Online
    } else {
        Route::Offline
    };
    Ok(RouteDecision {
        route,
        mmd,
        new_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn snapshot_of(vectors: Vec<Vec<f64>>) -> DistributionSnapshot {
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

    #[test]
    fn kernel_basics() {
        let u = [0.3, 0.7];
        assert_eq!(gaussian_kernel(&u, &u, 1.0), 1.0);
        let k = gaussian_kernel(&[0.0], &[1.0], 1.0);
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);
        let a = [0.1, 0.9, 0.3];
        let b = [0.4, 0.2, 0.8];
        assert_eq!(gaussian_kernel(&a, &b, 2.0), gaussian_kernel(&b, &a, 2.0));
    }

    #[test]
    fn kernel_pads_shorter_vector_with_zeros() {
        let k1 = gaussian_kernel(&[0.5, 0.5], &[0.5, 0.5, 0.0], 1.0);
        let k2 = gaussian_kernel(&[0.5, 0.5], &[0.5, 0.5], 1.0);
        assert_eq!(k1, k2);
    }

    #[test]
    fn mmd_of_identical_snapshots_vanishes() {
        let p = snapshot_of(vec![vec![0.5, 0.5], vec![0.25, 0.75]]);
        let cfg = MmdConfig::new(1.0, 0.0).unwrap();
        assert!(mmd_value(&p, &p, &cfg).unwrap() <= 1e-12);
    }

    #[test]
    fn mmd_closed_form_single_points() {
        let p = snapshot_of(vec![vec![0.0]]);
        let q = snapshot_of(vec![vec![1.0]]);
        let cfg = MmdConfig::new(1.0, 0.0).unwrap();
        let expected = 2.0 - 2.0 * (-1.0f64).exp();
        assert!((mmd_value(&p, &q, &cfg).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn mmd_two_point_example() {
        let p = snapshot_of(vec![vec![0.0], vec![2.0]]);
        let q = snapshot_of(vec![vec![1.0], vec![1.0]]);
        let cfg = MmdConfig::new(1.0, 0.0).unwrap();
        // (2 + 2e^-4)/4 + 1 - 2e^-1
        let expected = 0.5 + 0.5 * (-4.0f64).exp() + 1.0 - 2.0 * (-1.0f64).exp();
        let got = mmd_value(&p, &q, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.773399).abs() < 1e-6);
    }

    #[test]
    fn mmd_rejects_empty_snapshot() {
        let p = snapshot_of(vec![vec![0.0]]);
        let empty = snapshot_of(vec![]);
        let cfg = MmdConfig::new(1.0, 0.0).unwrap();
        assert!(mmd_value(&p, &empty, &cfg).is_err());
    }

    #[test]
    fn calibrate_takes_tenth_of_mean_consecutive_mmd() {
        // Engineer three batches and verify epsilon = mean(mmd(1,2), mmd(2,3)) / 10.
        let b1 = snapshot_of(vec![vec![1.0, 0.0]]);
        let b2 = snapshot_of(vec![vec![0.9, 0.1]]);
        let b3 = snapshot_of(vec![vec![0.8, 0.2]]);
        let cfg = calibrate(&[b1.clone(), b2.clone(), b3.clone()]).unwrap();
        let probe = MmdConfig {
            sigma: cfg.sigma,
            epsilon: 0.0,
        };
        let expected = (mmd_value(&b1, &b2, &probe).unwrap()
            + mmd_value(&b2, &b3, &probe).unwrap())
            / 2.0
            / 10.0;
        assert!((cfg.epsilon - expected).abs() < 1e-15);
    }

    #[test]
    fn calibrate_on_identical_batches_gives_zero_epsilon_and_fallback_sigma() {
        let b = snapshot_of(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let cfg = calibrate(&[b.clone(), b.clone(), b]).unwrap();
        assert_eq!(cfg.epsilon, 0.0);
        assert_eq!(cfg.sigma, 1.0);
    }

    #[test]
    fn calibrate_requires_two_batches() {
        let b = snapshot_of(vec![vec![1.0]]);
        assert!(calibrate(&[b]).is_err());
    }

    #[test]
    fn new_events_route_online_regardless_of_mmd() {
        let prev = snapshot_of(vec![vec![1.0, 0.0]]);
        let cur = snapshot_of(vec![vec![1.0, 0.0]]); // identical content
        let mut cur_new = cur.clone();
        cur_new.event_types.insert(7);
        let cfg = MmdConfig::new(1.0, 0.5).unwrap();
        let d = decide(&prev, &cur_new, 2, &cfg).unwrap();
        assert_eq!(d.route, Route::Online);
        assert!(d.new_events);
        assert!(d.mmd <= cfg.epsilon);
    }

    #[test]
    fn identical_batch_routes_offline() {
        let prev = snapshot_of(vec![vec![0.5, 0.5]]);
        let cfg = MmdConfig::new(1.0, 0.01).unwrap();
        let d = decide(&prev, &prev.clone(), 2, &cfg).unwrap();
        assert_eq!(d.route, Route::Offline);
        assert!(!d.new_events);
        assert_eq!(d.mmd, 0.0);
    }

    #[test]
    fn mmd_above_epsilon_routes_online() {
        let prev = snapshot_of(vec![vec![1.0, 0.0]]);
        let cur = snapshot_of(vec![vec![0.0, 1.0]]);
        let cfg = MmdConfig::new(1.0, 1e-3).unwrap();
        let d = decide(&prev, &cur, 2, &cfg).unwrap();
        assert_eq!(d.route, Route::Online);
        assert!(!d.new_events);
        assert!(d.mmd > cfg.epsilon);
    }
}
