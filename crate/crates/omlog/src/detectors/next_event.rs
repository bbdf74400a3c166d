//! Next-event prediction model: embedding -> LSTM unrolled over the window
//! -> growable classifier over the event vocabulary. A window is normal iff
//! the observed next event ranks within the Top-K predicted classes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EventId, Sample};
use crate::error::{Error, Result};
use crate::features::NextEventPair;
use crate::neural::{
    softmax_cross_entropy, Dense, Embedding, LstmCell, LstmStep, ParameterStore, SgdConfig,
    StoreSnapshot, Tensor,
};

use super::DetectionVerdict;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NextEventConfig {
    /// Window size h.
    pub h: usize,
    /// Top-K count for the normality rule.
    pub k: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub minibatch: usize,
    pub seed: u64,
}

impl Default for NextEventConfig {
    fn default() -> Self {
        Self {
            h: 3,
            k: 9,
            embed_dim: 16,
            hidden: 64,
            minibatch: 32,
            seed: 1,
        }
    }
}

/// Loss trajectory of a training run; `best_epoch` indexes the checkpoint
/// that was kept.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
    pub val_losses: Vec<(usize, f64)>,
    pub best_epoch: usize,
}

/// True iff `target` ranks among the K highest scores. Ties go to the lower
/// class id, so the decision depends only on the ranking and is invariant
/// under any strictly monotone transform of the scores.
pub fn top_k_contains(logits: &[f64], k: usize, target: usize) -> bool {
    let score = logits[target];
    let mut rank = 0usize;
    for (c, &l) in logits.iter().enumerate() {
        if l > score || (l == score && c < target) {
            rank += 1;
        }
    }
    rank < k
}

struct ForwardPass {
    steps: Vec<LstmStep>,
    logits: Vec<f64>,
}

#[derive(Clone)]
pub struct NextEventModel {
    store: ParameterStore,
    embedding: Embedding,
    lstm: LstmCell,
    classifier: Dense,
    cfg: NextEventConfig,
    vocab_size: usize,
    /// Dedicated stream for class-growth initialization so online growth is
    /// deterministic regardless of how much training happened before it.
    grow_rng: ChaCha8Rng,
}

impl NextEventModel {
    pub fn new(cfg: NextEventConfig, vocab_size: usize) -> Self {
        assert!(vocab_size >= 1, "vocabulary must be non-empty");
        assert!(cfg.h >= 1 && cfg.k >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParameterStore::new();
        let embedding =
            Embedding::init(&mut store, "embedding", vocab_size, cfg.embed_dim, &mut rng);
        let lstm = LstmCell::init(&mut store, "lstm", cfg.embed_dim, cfg.hidden, &mut rng);
        let classifier = Dense::init(&mut store, "classifier", cfg.hidden, vocab_size, &mut rng);
        let grow_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e3779b97f4a7c15));
        Self {
            store,
            embedding,
            lstm,
            classifier,
            cfg,
            vocab_size,
            grow_rng,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn config(&self) -> &NextEventConfig {
        &self.cfg
    }

    pub fn h(&self) -> usize {
        self.cfg.h
    }

    pub fn k(&self) -> usize {
        self.cfg.k
    }

    pub fn set_k(&mut self, k: usize) {
        assert!(k >= 1);
        self.cfg.k = k;
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        self.store.snapshot()
    }

    pub fn restore(&mut self, snapshot: &StoreSnapshot) {
        self.store.restore(snapshot);
    }

    fn run_forward(&self, window: &[EventId]) -> ForwardPass {
        debug_assert_eq!(window.len(), self.cfg.h);
        let mut h = vec![0.0; self.cfg.hidden];
        let mut c = vec![0.0; self.cfg.hidden];
        let mut steps = Vec::with_capacity(window.len());
        for &event in window {
            let x = self.embedding.forward(&self.store, event);
            let step = self.lstm.forward(&self.store, &x, &h, &c);
            h = step.h.clone();
            c = step.c.clone();
            steps.push(step);
        }
        let logits = self.classifier.forward(&self.store, &h);
        ForwardPass { steps, logits }
    }

    /// Class scores for the next event after `window`. All window events
    /// must be inside the vocabulary.
    pub fn logits(&self, window: &[EventId]) -> Vec<f64> {
        self.run_forward(window).logits
    }

    /// One mini-batch of cross-entropy SGD; returns the mean loss. The
    /// gradient is the mean over the batch.
    pub fn train_minibatch(&mut self, pairs: &[NextEventPair], lr: f64) -> Result<f64> {
        self.train_minibatch_objective(pairs, lr, Objective::CrossEntropy)
    }

    /// Mini-batch SGD under an explicit objective (the episodic path exposes
    /// the literal squared-error variant).
    pub fn train_minibatch_objective(
        &mut self,
        pairs: &[NextEventPair],
        lr: f64,
        objective: Objective,
    ) -> Result<f64> {
        assert!(!pairs.is_empty());
        self.store.zero_grads();
        let mut total = 0.0;
        for pair in pairs {
            let pass = self.run_forward(&pair.window);
            let (loss, dlogits) = objective.loss_and_grad(&pass.logits, pair.target);
            total += loss;
            self.backward_pair(&pair.window, &pass, &dlogits);
        }
        if !total.is_finite() {
            return Err(Error::numeric("non-finite next-event training loss"));
        }
        self.store.sgd_step(lr / pairs.len() as f64)?;
        Ok(total / pairs.len() as f64)
    }

    /// Backpropagate one pair through classifier, LSTM unroll, and the
    /// embedding rows the window touched; accumulates into store gradients.
    fn backward_pair(&mut self, window: &[EventId], pass: &ForwardPass, dlogits: &[f64]) {
        let last_h = &pass.steps.last().expect("non-empty window").h;
        let mut dh = self.classifier.backward(&mut self.store, last_h, dlogits);
        let mut dc = vec![0.0; self.cfg.hidden];
        for (t, step) in pass.steps.iter().enumerate().rev() {
            let (dx, dh_prev, dc_prev) = self.lstm.backward(&mut self.store, step, &dh, &dc);
            self.embedding.backward(&mut self.store, window[t], &dx);
            dh = dh_prev;
            dc = dc_prev;
        }
    }

    /// Mean cross-entropy without touching gradients.
    pub fn evaluate_loss(&self, pairs: &[NextEventPair]) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        let total: f64 = pairs
            .iter()
            .map(|p| softmax_cross_entropy(&self.logits(&p.window), p.target).0)
            .collect::<Vec<_>>()
            .iter()
            .sum();
        total / pairs.len() as f64
    }

    /// Standard initial training on normal-only pairs. Shuffles per epoch
    /// (seeded), holds out the trailing tenth for validation, checkpoints at
    /// `eval_every` boundaries, and restores the best checkpoint at the end.
    pub fn train_initial(&mut self, pairs: &[NextEventPair], sgd: &SgdConfig) -> Result<TrainLog> {
        if pairs.is_empty() {
            return Err(Error::data("next-event training needs at least one pair"));
        }
        let val_len = if pairs.len() >= 20 {
            pairs.len() / 10
        } else {
            0
        };
        let (train, val) = pairs.split_at(pairs.len() - val_len);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(0x51ed_5eed));

        let mut log = TrainLog::default();
        let mut best: Option<(f64, StoreSnapshot, usize)> = None;
        for epoch in 0..sgd.epochs {
            order.shuffle(&mut shuffle_rng);
            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(self.cfg.minibatch.max(1)) {
                let batch: Vec<NextEventPair> = chunk.iter().map(|&i| train[i].clone()).collect();
                epoch_loss += self.train_minibatch(&batch, sgd.learning_rate)?;
                batches += 1;
            }
            log.epoch_losses.push(epoch_loss / batches.max(1) as f64);

            let at_eval = sgd.eval_every > 0 && (epoch + 1) % sgd.eval_every == 0;
            if at_eval || epoch + 1 == sgd.epochs {
                let val_loss = if val.is_empty() {
                    *log.epoch_losses.last().unwrap()
                } else {
                    self.evaluate_loss(val)
                };
                log.val_losses.push((epoch + 1, val_loss));
                if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
                    best = Some((val_loss, self.store.snapshot(), epoch + 1));
                }
            }
        }
        if let Some((_, snapshot, epoch)) = best {
            self.store.restore(&snapshot);
            log.best_epoch = epoch;
        }
        Ok(log)
    }

    /// Top-K normality decision for one window.
    pub fn is_window_normal(&self, window: &[EventId], actual: EventId) -> bool {
        if actual >= self.vocab_size || window.iter().any(|&e| e >= self.vocab_size) {
            // Events outside the vocabulary are outside the prediction range.
            return false;
        }
        top_k_contains(&self.logits(window), self.cfg.k, actual)
    }

    /// Sample-level rule: anomalous iff any window fails the Top-K test.
    /// Samples with fewer than h+1 events cannot be tested and default to
    /// normal; the caller counts them.
    pub fn score_sample(&self, sample: &Sample) -> DetectionVerdict {
        let h = self.cfg.h;
        let mut offending = None;
        if sample.events.len() > h {
            for i in 0..sample.events.len() - h {
                let window = &sample.events[i..i + h];
                let actual = sample.events[i + h];
                if !self.is_window_normal(window, actual) {
                    offending = Some(i);
                    break;
                }
            }
        }
        DetectionVerdict {
            origin: sample.origin.clone(),
            anomalous: offending.is_some(),
            offending_window: offending,
        }
    }

    /// Grow embedding and classifier to cover `new_vocab_size` classes. Old
    /// rows are untouched, so logits for existing classes are bit-identical
    /// on any input. New rows use the standard init from the growth stream.
    pub fn grow_classes(&mut self, new_vocab_size: usize) -> Result<()> {
        if new_vocab_size < self.vocab_size {
            return Err(Error::config(format!(
                "cannot shrink classifier from {} to {new_vocab_size}",
                self.vocab_size
            )));
        }
        if new_vocab_size == self.vocab_size {
            return Ok(());
        }
        let added = new_vocab_size - self.vocab_size;
        let emb_rows = crate::neural::uniform_init(
            &mut self.grow_rng,
            self.cfg.embed_dim,
            added * self.cfg.embed_dim,
        );
        self.store.append_rows(self.embedding.table, &emb_rows);
        let cls_rows = crate::neural::uniform_init(
            &mut self.grow_rng,
            self.cfg.hidden,
            added * self.cfg.hidden,
        );
        self.store.append_rows(self.classifier.w, &cls_rows);
        let cls_bias = crate::neural::uniform_init(&mut self.grow_rng, self.cfg.hidden, added);
        self.store.append_scalars(self.classifier.b, &cls_bias);
        self.vocab_size = new_vocab_size;
        Ok(())
    }

    /// Overwrite embedding rows with imported vectors (the optional
    /// precomputed-embedding hook).
    pub fn import_embeddings(&mut self, rows: &[(EventId, Vec<f64>)]) -> Result<()> {
        for (event_id, values) in rows {
            if *event_id >= self.vocab_size {
                return Err(Error::data(format!(
                    "imported embedding for event {event_id} outside vocabulary {}",
                    self.vocab_size
                )));
            }
            if values.len() != self.cfg.embed_dim {
                return Err(Error::data(format!(
                    "imported embedding dim {} != model dim {}",
                    values.len(),
                    self.cfg.embed_dim
                )));
            }
            let table = self.store.value_mut(self.embedding.table);
            let row = *event_id * self.cfg.embed_dim;
            table.data[row..row + self.cfg.embed_dim].copy_from_slice(values);
        }
        Ok(())
    }

    /// Serialize to the checkpoint format.
    pub fn manifest(&self) -> Vec<(String, String)> {
        vec![
            ("model".into(), "next_event".into()),
            ("vocab".into(), self.vocab_size.to_string()),
            ("h".into(), self.cfg.h.to_string()),
            ("k".into(), self.cfg.k.to_string()),
            ("embed_dim".into(), self.cfg.embed_dim.to_string()),
            ("hidden".into(), self.cfg.hidden.to_string()),
            ("minibatch".into(), self.cfg.minibatch.to_string()),
            ("seed".into(), self.cfg.seed.to_string()),
            (
                "grow_word_pos".into(),
                self.grow_rng.get_word_pos().to_string(),
            ),
        ]
    }

    /// Rebuild from a checkpoint, bit-exact including the growth stream
    /// position.
    pub fn from_checkpoint(ck: &crate::neural::Checkpoint) -> Result<Self> {
        if ck.manifest_str("model")? != "next_event" {
            return Err(Error::data("checkpoint is not a next-event model"));
        }
        let cfg = NextEventConfig {
            h: ck.manifest_u64("h")? as usize,
            k: ck.manifest_u64("k")? as usize,
            embed_dim: ck.manifest_u64("embed_dim")? as usize,
            hidden: ck.manifest_u64("hidden")? as usize,
            minibatch: ck.manifest_u64("minibatch")? as usize,
            seed: ck.manifest_u64("seed")?,
        };
        let vocab = ck.manifest_u64("vocab")? as usize;
        let mut model = Self::new(cfg, vocab);
        for id in 0..model.store.len() {
            let name = model.store.name(id).to_string();
            let tensor = ck.tensor(&name)?;
            *model.store.value_mut(id) = tensor.clone();
            *model.store.grad_mut(id) = Tensor::zeros(&tensor.shape);
        }
        let word_pos: u128 = ck
            .manifest_str("grow_word_pos")?
            .parse()
            .map_err(|_| Error::data("bad grow_word_pos"))?;
        model.grow_rng.set_word_pos(word_pos);
        model.vocab_size = ck.manifest_u64("vocab")? as usize;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, LogHeader, SampleOrigin};

    fn toy_model(vocab: usize, k: usize) -> NextEventModel {
        NextEventModel::new(
            NextEventConfig {
                h: 3,
                k,
                embed_dim: 4,
                hidden: 8,
                minibatch: 4,
                seed: 42,
            },
            vocab,
        )
    }

    fn sample(events: Vec<EventId>) -> Sample {
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
                window_index: 0,
            },
        }
    }

    fn set_logit_fixture(model: &mut NextEventModel, probs: &[f64]) {
        // Zero the classifier weights and write log-probabilities into the
        // bias so logits are independent of the window content.
        let w = model.classifier.w;
        let b = model.classifier.b;
        model.store.value_mut(w).data.fill(0.0);
        for (i, &p) in probs.iter().enumerate() {
            model.store.value_mut(b).data[i] = p.ln();
        }
    }

    #[test]
    fn top_k_rule_on_fixed_distribution() {
        let mut model = toy_model(4, 2);
        set_logit_fixture(&mut model, &[0.5, 0.3, 0.1, 0.1]);
        assert!(model.is_window_normal(&[0, 1, 2], 1));
        assert!(!model.is_window_normal(&[0, 1, 2], 2));
        // Tie between classes 2 and 3: the lower id wins the last slot.
        let mut k3 = toy_model(4, 3);
        set_logit_fixture(&mut k3, &[0.5, 0.3, 0.1, 0.1]);
        assert!(k3.is_window_normal(&[0, 1, 2], 2));
        assert!(!k3.is_window_normal(&[0, 1, 2], 3));
    }

    #[test]
    fn k_at_vocab_size_accepts_everything() {
        let model = toy_model(5, 5);
        for actual in 0..5 {
            assert!(model.is_window_normal(&[0, 1, 2], actual));
        }
    }

    #[test]
    fn unseen_event_is_outside_prediction_range() {
        let model = toy_model(4, 4);
        assert!(!model.is_window_normal(&[0, 1, 2], 9));
        assert!(!model.is_window_normal(&[0, 9, 2], 1));
    }

    #[test]
    fn score_sample_reports_first_offending_window() {
        let mut model = toy_model(4, 1);
        set_logit_fixture(&mut model, &[0.7, 0.1, 0.1, 0.1]);
        // windows: [0,0,0]->0 ok; [0,0,0]->1 fails at index 1
        let v = model.score_sample(&sample(vec![0, 0, 0, 0, 1, 0]));
        assert!(v.anomalous);
        assert_eq!(v.offending_window, Some(1));
        let v = model.score_sample(&sample(vec![0, 0, 0, 0, 0]));
        assert!(!v.anomalous);
        assert_eq!(v.offending_window, None);
    }

    #[test]
    fn short_sample_defaults_to_normal() {
        let model = toy_model(4, 1);
        let v = model.score_sample(&sample(vec![0, 1, 2]));
        assert!(!v.anomalous);
    }

    #[test]
    fn repeated_pair_converges_on_toy_case() {
        let mut model = toy_model(5, 1);
        let pair = NextEventPair {
            window: vec![0, 1, 2],
            target: 3,
        };
        let pairs = vec![pair.clone(); 8];
        let sgd = SgdConfig {
            learning_rate: 0.5,
            epochs: 100,
            eval_every: 20,
        };
        let log = model.train_initial(&pairs, &sgd).unwrap();
        assert!(
            log.epoch_losses.last().unwrap() < &0.1,
            "final loss {:?}",
            log.epoch_losses.last()
        );
        assert!(model.is_window_normal(&[0, 1, 2], 3));
    }

    #[test]
    fn zero_lr_keeps_loss_trajectory_constant() {
        let mut model = toy_model(5, 1);
        let pairs = vec![
            NextEventPair {
                window: vec![0, 1, 2],
                target: 3,
            },
            NextEventPair {
                window: vec![1, 2, 3],
                target: 4,
            },
        ];
        let sgd = SgdConfig {
            learning_rate: 0.0,
            epochs: 5,
            eval_every: 0,
        };
        let log = model.train_initial(&pairs, &sgd).unwrap();
        let first = log.epoch_losses[0];
        assert!(log.epoch_losses.iter().all(|&l| l == first));
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let pairs: Vec<NextEventPair> = (0..20)
            .map(|i| NextEventPair {
                window: vec![i % 5, (i + 1) % 5, (i + 2) % 5],
                target: (i + 3) % 5,
            })
            .collect();
        let sgd = SgdConfig {
            learning_rate: 0.1,
            epochs: 10,
            eval_every: 5,
        };
        let mut a = toy_model(5, 2);
        let mut b = toy_model(5, 2);
        let la = a.train_initial(&pairs, &sgd).unwrap();
        let lb = b.train_initial(&pairs, &sgd).unwrap();
        assert_eq!(la.epoch_losses, lb.epoch_losses);
        for id in 0..a.store.len() {
            assert_eq!(a.store.value(id), b.store.value(id));
        }
    }

    #[test]
    fn empty_pair_stream_is_an_error() {
        let mut model = toy_model(3, 1);
        assert!(model.train_initial(&[], &SgdConfig::default()).is_err());
    }

    #[test]
    fn growth_preserves_old_logits_bit_exactly() {
        let mut model = toy_model(5, 2);
        let window = [0, 1, 2];
        let before = model.logits(&window);
        model.grow_classes(7).unwrap();
        let after = model.logits(&window);
        assert_eq!(model.vocab_size(), 7);
        assert_eq!(after.len(), 7);
        assert_eq!(&after[..5], &before[..]);
        // Growing to the current size is a no-op; shrinking is an error.
        let snap = model.snapshot();
        model.grow_classes(7).unwrap();
        assert_eq!(model.snapshot(), snap);
        assert!(model.grow_classes(3).is_err());
    }

    #[test]
    fn import_embeddings_overwrites_rows() {
        let mut model = toy_model(3, 1);
        model
            .import_embeddings(&[(1, vec![9.0, 8.0, 7.0, 6.0])])
            .unwrap();
        assert_eq!(
            model.store.value(model.embedding.table).row(1),
            &[9.0, 8.0, 7.0, 6.0]
        );
        assert!(model.import_embeddings(&[(5, vec![0.0; 4])]).is_err());
        assert!(model.import_embeddings(&[(0, vec![0.0; 3])]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_preserves_behavior() {
        let mut model = toy_model(5, 2);
        let pairs = vec![
            NextEventPair {
                window: vec![0, 1, 2],
                target: 3
            };
            4
        ];
        let sgd = SgdConfig {
            learning_rate: 0.2,
            epochs: 5,
            eval_every: 0,
        };
        model.train_initial(&pairs, &sgd).unwrap();
        model.grow_classes(6).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ne.ckpt");
        crate::neural::write_checkpoint(&path, &model.manifest(), model.store()).unwrap();
        let ck = crate::neural::read_checkpoint(&path).unwrap();
        let mut restored = NextEventModel::from_checkpoint(&ck).unwrap();
        assert_eq!(restored.logits(&[0, 1, 2]), model.logits(&[0, 1, 2]));

        // The growth stream continues where it left off.
        restored.grow_classes(7).unwrap();
        model.grow_classes(7).unwrap();
        assert_eq!(restored.logits(&[0, 1, 2]), model.logits(&[0, 1, 2]));
    }
}
