//! Loss functions returning `(loss, d loss / d input)`.

use serde::{Deserialize, Serialize};

/// Classification objective over next-event logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Softmax cross-entropy over next-event classes.
    CrossEntropy,
    /// Squared error between the softmax distribution and the one-hot target.
    SquaredError,
}

impl Objective {
    pub fn loss_and_grad(&self, logits: &[f64], target: usize) -> (f64, Vec<f64>) {
        match self {
            Objective::CrossEntropy => softmax_cross_entropy(logits, target),
            Objective::SquaredError => squared_error_on_probs(logits, target),
        }
    }
}

/// Numerically stable softmax cross-entropy against an integer target.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    debug_assert!(target < logits.len());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let mut dlogits: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
    let loss = -(dlogits[target].max(f64::MIN_POSITIVE)).ln();
    dlogits[target] -= 1.0;
    (loss, dlogits)
}

/// Softmax probabilities alone (used by Top-K scoring and the squared-error
/// objective variant).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Squared error between the softmax distribution and the one-hot target,
/// summed over classes. The literal-objective variant of the episodic loss.
pub fn squared_error_on_probs(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let mut loss = 0.0;
    let mut g = Vec::with_capacity(p.len());
    for (i, &pi) in p.iter().enumerate() {
        let y = if i == target { 1.0 } else { 0.0 };
        let d = pi - y;
        loss += d * d;
        g.push(2.0 * d);
    }
    let dot: f64 = g.iter().zip(&p).map(|(gi, pi)| gi * pi).sum();
    let dlogits = p.iter().zip(&g).map(|(&pi, &gi)| pi * (gi - dot)).collect();
    (loss, dlogits)
}

/// Mean squared error over all dimensions.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(pred.len(), target.len());
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut dpred = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let d = p - t;
        loss += d * d;
        dpred.push(2.0 * d / n);
    }
    (loss / n, dpred)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_identical_vectors_is_zero() {
        let x = [0.3, -0.7, 1.1];
        let (loss, dx) = mse_loss(&x, &x);
        assert_eq!(loss, 0.0);
        assert!(dx.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        for c in [2usize, 5, 17] {
            let logits = vec![0.42; c];
            let (loss, _) = softmax_cross_entropy(&logits, 0);
            assert!((loss - (c as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero() {
        let logits = [1.0, -2.0, 0.5, 3.0];
        let (_, d) = softmax_cross_entropy(&logits, 2);
        let sum: f64 = d.iter().sum();
        assert!(sum.abs() < 1e-12);
        assert!(d[2] < 0.0);
    }
}
