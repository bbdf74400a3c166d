//! Autoencoder normality model over header features. Samples whose mean
//! window reconstruction MSE stays strictly below the threshold are treated
//! as high-confidence normal and feed label-free online training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::features::{header_features, HeaderFeatureConfig};
use crate::neural::{mse_loss, Dense, ParameterStore, SgdConfig, StoreSnapshot, Tensor};

use super::TrainLog;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityConfig {
    pub hidden: usize,
    pub bottleneck: usize,
    /// Samples with mean window MSE strictly below this are kept as normal.
    pub threshold: f64,
    /// Header vectors are mean-pooled over non-overlapping record windows of
    /// this many records before encoding.
    pub sub_window: usize,
    pub minibatch: usize,
    pub seed: u64,
}

impl Default for NormalityConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            bottleneck: 8,
            threshold: 0.02,
            sub_window: 10,
            minibatch: 32,
            seed: 2,
        }
    }
}

#[derive(Clone)]
pub struct NormalityModel {
    store: ParameterStore,
    enc1: Dense,
    enc2: Dense,
    dec1: Dense,
    dec2: Dense,
    cfg: NormalityConfig,
    feat: HeaderFeatureConfig,
    input_dim: usize,
}

struct AePass {
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    a3: Vec<f64>,
    recon: Vec<f64>,
}

fn tanh_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.tanh()).collect()
}

impl NormalityModel {
    pub fn new(cfg: NormalityConfig, feat: HeaderFeatureConfig) -> Self {
        assert!(cfg.threshold > 0.0, "threshold must be positive");
        assert!(cfg.sub_window >= 1);
        let input_dim = feat.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParameterStore::new();
        let enc1 = Dense::init(&mut store, "enc1", input_dim, cfg.hidden, &mut rng);
        let enc2 = Dense::init(&mut store, "enc2", cfg.hidden, cfg.bottleneck, &mut rng);
        let dec1 = Dense::init(&mut store, "dec1", cfg.bottleneck, cfg.hidden, &mut rng);
        let dec2 = Dense::init(&mut store, "dec2", cfg.hidden, input_dim, &mut rng);
        Self {
            store,
            enc1,
            enc2,
            dec1,
            dec2,
            cfg,
            feat,
            input_dim,
        }
    }

    pub fn config(&self) -> &NormalityConfig {
        &self.cfg
    }

    pub fn feature_config(&self) -> &HeaderFeatureConfig {
        &self.feat
    }

    pub fn threshold(&self) -> f64 {
        self.cfg.threshold
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        self.cfg.threshold = threshold;
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
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

    fn run_forward(&self, x: &[f64]) -> AePass {
        let a1 = tanh_vec(&self.enc1.forward(&self.store, x));
        let a2 = tanh_vec(&self.enc2.forward(&self.store, &a1));
        let a3 = tanh_vec(&self.dec1.forward(&self.store, &a2));
        let recon = self.dec2.forward(&self.store, &a3);
        AePass {
            x: x.to_vec(),
            a1,
            a2,
            a3,
            recon,
        }
    }

    /// Reconstruction for one pooled feature vector.
    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        self.run_forward(x).recon
    }

    pub fn reconstruction_mse(&self, x: &[f64]) -> f64 {
        mse_loss(&self.reconstruct(x), x).0
    }

    fn backward(&mut self, pass: &AePass, drecon: &[f64]) {
        let d3 = self.dec2.backward(&mut self.store, &pass.a3, drecon);
        let d3: Vec<f64> = d3
            .iter()
            .zip(&pass.a3)
            .map(|(d, a)| d * (1.0 - a * a))
            .collect();
        let d2 = self.dec1.backward(&mut self.store, &pass.a2, &d3);
        let d2: Vec<f64> = d2
            .iter()
            .zip(&pass.a2)
            .map(|(d, a)| d * (1.0 - a * a))
            .collect();
        let d1 = self.enc2.backward(&mut self.store, &pass.a1, &d2);
        let d1: Vec<f64> = d1
            .iter()
            .zip(&pass.a1)
            .map(|(d, a)| d * (1.0 - a * a))
            .collect();
        self.enc1.backward(&mut self.store, &pass.x, &d1);
    }

    /// One reconstruction mini-batch; mean-reduced gradient.
    pub fn train_minibatch(&mut self, inputs: &[Vec<f64>], lr: f64) -> Result<f64> {
        assert!(!inputs.is_empty());
        self.store.zero_grads();
        let mut total = 0.0;
        for x in inputs {
            let pass = self.run_forward(x);
            let (loss, drecon) = mse_loss(&pass.recon, x);
            total += loss;
            self.backward(&pass, &drecon);
        }
        if !total.is_finite() {
            return Err(Error::numeric("non-finite reconstruction loss"));
        }
        self.store.sgd_step(lr / inputs.len() as f64)?;
        Ok(total / inputs.len() as f64)
    }

    /// Train on pooled header windows from normal data; same schedule and
    /// checkpoint policy as the next-event model, with the MSE objective.
    pub fn train(&mut self, inputs: &[Vec<f64>], sgd: &SgdConfig) -> Result<TrainLog> {
        if inputs.is_empty() {
            return Err(Error::data("normality training needs at least one window"));
        }
        let val_len = if inputs.len() >= 20 {
            inputs.len() / 10
        } else {
            0
        };
        let (train, val) = inputs.split_at(inputs.len() - val_len);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(0x51ed_5eed));

        let mut log = TrainLog::default();
        let mut best: Option<(f64, StoreSnapshot, usize)> = None;
        for epoch in 0..sgd.epochs {
            order.shuffle(&mut shuffle_rng);
            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(self.cfg.minibatch.max(1)) {
                let batch: Vec<Vec<f64>> = chunk.iter().map(|&i| train[i].clone()).collect();
                epoch_loss += self.train_minibatch(&batch, sgd.learning_rate)?;
                batches += 1;
            }
            log.epoch_losses.push(epoch_loss / batches.max(1) as f64);

            let at_eval = sgd.eval_every > 0 && (epoch + 1) % sgd.eval_every == 0;
            if at_eval || epoch + 1 == sgd.epochs {
                let val_loss = if val.is_empty() {
                    *log.epoch_losses.last().unwrap()
                } else {
                    val.iter().map(|x| self.reconstruction_mse(x)).sum::<f64>() / val.len() as f64
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

    /// Mean-pool header features over non-overlapping `sub_window` record
    /// groups; a shorter tail group is pooled as-is.
    pub fn pooled_windows(&self, sample: &Sample) -> Vec<Vec<f64>> {
        let feats = header_features(sample, &self.feat);
        if feats.is_empty() {
            return Vec::new();
        }
        feats
            .chunks(self.cfg.sub_window)
            .map(|chunk| {
                let mut pooled = vec![0.0; self.input_dim];
                for f in chunk {
                    for (slot, v) in pooled.iter_mut().zip(&f.values) {
                        *slot += v;
                    }
                }
                for slot in &mut pooled {
                    *slot /= chunk.len() as f64;
                }
                pooled
            })
            .collect()
    }

    /// Mean reconstruction MSE over the sample's pooled windows.
    pub fn sample_mse(&self, sample: &Sample) -> f64 {
        let windows = self.pooled_windows(sample);
        if windows.is_empty() {
            return f64::INFINITY;
        }
        windows
            .iter()
            .map(|x| self.reconstruction_mse(x))
            .sum::<f64>()
            / windows.len() as f64
    }

    /// Indices of batch samples that pass the strict threshold test, in
    /// their original order.
    pub fn filter_indices(&self, batch: &[Sample]) -> Vec<usize> {
        batch
            .iter()
            .enumerate()
            .filter(|(_, s)| self.sample_mse(s) < self.cfg.threshold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn manifest(&self) -> Vec<(String, String)> {
        vec![
            ("model".into(), "normality".into()),
            ("hidden".into(), self.cfg.hidden.to_string()),
            ("bottleneck".into(), self.cfg.bottleneck.to_string()),
            ("threshold".into(), format!("{:?}", self.cfg.threshold)),
            ("sub_window".into(), self.cfg.sub_window.to_string()),
            ("minibatch".into(), self.cfg.minibatch.to_string()),
            ("seed".into(), self.cfg.seed.to_string()),
            ("component_cap".into(), self.feat.component_cap.to_string()),
            ("level_cap".into(), self.feat.level_cap.to_string()),
            (
                "dt_clip_seconds".into(),
                format!("{:?}", self.feat.dt_clip_seconds),
            ),
        ]
    }

    pub fn from_checkpoint(ck: &crate::neural::Checkpoint) -> Result<Self> {
        if ck.manifest_str("model")? != "normality" {
            return Err(Error::data("checkpoint is not a normality model"));
        }
        let cfg = NormalityConfig {
            hidden: ck.manifest_u64("hidden")? as usize,
            bottleneck: ck.manifest_u64("bottleneck")? as usize,
            threshold: ck.manifest_f64("threshold")?,
            sub_window: ck.manifest_u64("sub_window")? as usize,
            minibatch: ck.manifest_u64("minibatch")? as usize,
            seed: ck.manifest_u64("seed")?,
        };
        let feat = HeaderFeatureConfig {
            component_cap: ck.manifest_u64("component_cap")? as usize,
            level_cap: ck.manifest_u64("level_cap")? as usize,
            dt_clip_seconds: ck.manifest_f64("dt_clip_seconds")?,
        };
        let mut model = Self::new(cfg, feat);
        for id in 0..model.store.len() {
            let name = model.store.name(id).to_string();
            let tensor = ck.tensor(&name)?;
            *model.store.value_mut(id) = tensor.clone();
            *model.store.grad_mut(id) = Tensor::zeros(&tensor.shape);
        }
        Ok(model)
    }
}
