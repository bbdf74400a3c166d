//! Minimal differentiable core: dense/embedding/LSTM primitives with
//! hand-written backward passes, SGD, and a finite-difference verification
//! harness. Everything is f64 and sequential so training is bit-reproducible
//! given a seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod checkpoint;
mod gradcheck;
mod layers;
mod loss;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{gradient_check, GradCheckEntry, GradCheckReport};
pub use layers::{Dense, Embedding, LstmCell, LstmStep};
pub use loss::{mse_loss, softmax, softmax_cross_entropy, squared_error_on_probs};

/// Dense row-major array with an explicit shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data mismatch"
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }
}

/// Handle to a parameter registered in a [`ParameterStore`].
pub type ParamId = usize;

struct Param {
    name: String,
    value: Tensor,
    grad: Tensor,
}

/// Named parameter tensors with mirrored gradient buffers. Snapshots restore
/// the exact pre-mutation state, including shapes (needed when an aborted
/// episode must roll back).
#[derive(Default)]
pub struct ParameterStore {
    params: Vec<Param>,
}

/// Deep copy of all parameter values at one point in time.
#[derive(Clone, Debug, PartialEq)]
pub struct StoreSnapshot {
    values: Vec<Tensor>,
}

impl Clone for ParameterStore {
    fn clone(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.clone(),
                    grad: p.grad.clone(),
                })
                .collect(),
        }
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> ParamId {
        debug_assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let grad = Tensor::zeros(&value.shape);
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        0..self.params.len()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id].grad
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data.fill(0.0);
        }
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        StoreSnapshot {
            values: self.params.iter().map(|p| p.value.clone()).collect(),
        }
    }

    pub fn restore(&mut self, snapshot: &StoreSnapshot) {
        assert_eq!(
            snapshot.values.len(),
            self.params.len(),
            "snapshot store mismatch"
        );
        for (p, v) in self.params.iter_mut().zip(&snapshot.values) {
            p.value = v.clone();
            if p.grad.shape != v.shape {
                p.grad = Tensor::zeros(&v.shape);
            }
        }
    }

    /// Apply `theta <- theta - lr * grad`. A zero learning rate leaves every
    /// parameter bit-identical. Non-finite gradients abort with the tensor
    /// name before any parameter is touched.
    pub fn sgd_step(&mut self, lr: f64) -> Result<()> {
        if lr == 0.0 {
            return Ok(());
        }
        for p in &self.params {
            if p.grad.data.iter().any(|g| !g.is_finite()) {
                return Err(Error::numeric(format!(
                    "non-finite gradient in tensor `{}`",
                    p.name
                )));
            }
        }
        for p in &mut self.params {
            for (v, g) in p.value.data.iter_mut().zip(&p.grad.data) {
                *v -= lr * g;
            }
        }
        Ok(())
    }

    /// Grow a 2-D parameter by appending rows (old rows untouched). The
    /// gradient buffer grows with zeros.
    pub fn append_rows(&mut self, id: ParamId, rows: &[f64]) {
        let p = &mut self.params[id];
        assert_eq!(p.value.shape.len(), 2, "append_rows needs a 2-D tensor");
        let cols = p.value.shape[1];
        assert_eq!(
            rows.len() % cols,
            0,
            "row data must be a multiple of the column count"
        );
        let added = rows.len() / cols;
        p.value.data.extend_from_slice(rows);
        p.value.shape[0] += added;
        p.grad.data.extend(std::iter::repeat_n(0.0, rows.len()));
        p.grad.shape[0] += added;
    }

    /// Grow a 1-D parameter by appending entries (old entries untouched).
    pub fn append_scalars(&mut self, id: ParamId, values: &[f64]) {
        let p = &mut self.params[id];
        assert_eq!(p.value.shape.len(), 1, "append_scalars needs a 1-D tensor");
        p.value.data.extend_from_slice(values);
        p.value.shape[0] += values.len();
        p.grad.data.extend(std::iter::repeat_n(0.0, values.len()));
        p.grad.shape[0] += values.len();
    }
}

/// Plain SGD schedule used for both models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Validation / checkpoint cadence during initial training.
    pub eval_every: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.00001,
            epochs: 100,
            eval_every: 20,
        }
    }
}

/// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_init(rng: &mut impl rand::Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn snapshot_restore_round_trips_bit_exactly() {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let id = store.register("w", Tensor::from_vec(&[2, 3], uniform_init(&mut rng, 3, 6)));
        let snap = store.snapshot();
        let before = store.value(id).clone();
        for v in &mut store.value_mut(id).data {
            *v += 0.25;
        }
        store.append_rows(id, &[1.0, 2.0, 3.0]);
        assert_ne!(store.value(id), &before);
        store.restore(&snap);
        assert_eq!(store.value(id), &before);
        assert_eq!(store.grad(id).shape, before.shape);
    }

    #[test]
    fn sgd_with_zero_lr_is_identity() {
        let mut store = ParameterStore::new();
        let id = store.register("w", Tensor::from_vec(&[2], vec![0.5, -0.5]));
        store.grad_mut(id).data.copy_from_slice(&[100.0, -3.0]);
        let before = store.value(id).clone();
        store.sgd_step(0.0).unwrap();
        assert_eq!(store.value(id), &before);
    }

    #[test]
    fn sgd_rejects_non_finite_grads_with_name() {
        let mut store = ParameterStore::new();
        let id = store.register("w_broken", Tensor::from_vec(&[1], vec![0.0]));
        store.grad_mut(id).data[0] = f64::NAN;
        let err = store.sgd_step(0.1).unwrap_err();
        assert!(err.to_string().contains("w_broken"));
    }

    #[test]
    fn append_rows_preserves_existing_data() {
        let mut store = ParameterStore::new();
        let id = store.register("e", Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        store.append_rows(id, &[5.0, 6.0]);
        assert_eq!(store.value(id).shape, vec![3, 2]);
        assert_eq!(&store.value(id).data[..4], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(store.value(id).row(2), &[5.0, 6.0]);
    }
}
