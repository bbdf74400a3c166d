//! Finite-difference verification of analytic gradients.
//!
//! Protocol: the caller populates analytic gradients in the store (one
//! zero_grads + forward + backward over a fixed input), then hands over a
//! pure forward closure. Each parameter element is perturbed by ±step and
//! the central difference is compared against the stored analytic value.

use super::ParameterStore;

#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub param: String,
    pub max_rel_err: f64,
    pub checked: usize,
    /// Elements where both gradients sit below the relative-error
    /// denominator floor (e.g. embedding rows the batch never touched).
    /// Central differences cannot resolve them at the configured step, so
    /// they are zero-classified and excluded from the error.
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries
            .iter()
            .filter(move |e| e.max_rel_err >= self.tolerance)
    }
}

/// Matches the denominator floor of the relative-error formula.
const SKIP_BELOW: f64 = 1e-8;

/// Compare analytic gradients (already in the store) against central finite
/// differences of `forward`. Failures are reported, not thrown.
pub fn gradient_check(
    store: &mut ParameterStore,
    forward: impl Fn(&ParameterStore) -> f64,
    tolerance: f64,
    step: f64,
) -> GradCheckReport {
    let mut entries = Vec::new();
    for id in 0..store.len() {
        let name = store.name(id).to_string();
        let n = store.value(id).len();
        let mut max_rel_err = 0.0f64;
        let mut checked = 0usize;
        let mut skipped = 0usize;
        for k in 0..n {
            let analytic = store.grad(id).data[k];
            let original = store.value(id).data[k];
            store.value_mut(id).data[k] = original + step;
            let plus = forward(store);
            store.value_mut(id).data[k] = original - step;
            let minus = forward(store);
            store.value_mut(id).data[k] = original;
            let numeric = (plus - minus) / (2.0 * step);
            if analytic.abs() < SKIP_BELOW && numeric.abs() < SKIP_BELOW {
                skipped += 1;
                continue;
            }
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            max_rel_err = max_rel_err.max(rel);
            checked += 1;
        }
        entries.push(GradCheckEntry {
            param: name,
            max_rel_err,
            checked,
            skipped,
        });
    }
    GradCheckReport { entries, tolerance }
}
