use std::time::Instant;

use ecn_core::{apply_stat_updates, Ecn, Forward, Mode, Tensor};
use rand_chacha::ChaCha8Rng;
use rayon::iter::{ParallelBridge, ParallelIterator};
use serde::{Deserialize, Serialize};

use crate::data::{Batch, Batches, Dataset, Normalizer};
use crate::error::{Result, TrainError};
use crate::metrics::MetricsRecord;
use crate::optim::{sgd_step, OptimState, SgdConfig};
use crate::rng::{epoch_rng, Stream};
use crate::schedule::{lr_at, Schedule};

/// Ratio of batch loss to first-batch loss treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

fn default_batch() -> usize {
    512
}
fn default_lr() -> f64 {
    0.1
}
fn default_momentum() -> f64 {
    0.9
}
fn default_decay() -> f64 {
    1e-4
}
fn default_eval_every() -> usize {
    1
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub base_lr: f64,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
    /// Must equal the dropout rate the network was planned with.
    #[serde(default)]
    pub dropout_rate: f64,
    /// Evaluate every this many epochs and after the last; 0 never evaluates.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_true")]
    pub augment: bool,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size: default_batch(),
            base_lr: default_lr(),
            schedule: Schedule::default(),
            momentum: default_momentum(),
            weight_decay: default_decay(),
            seed,
            dropout_rate: 0.0,
            eval_every: default_eval_every(),
            augment: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must lie in [0, 1)");
        }
        Ok(())
    }

    /// Whether the (one-based) epoch gets a test evaluation.
    pub fn evaluates_after(&self, epoch: usize) -> bool {
        self.eval_every > 0 && (epoch % self.eval_every == 0 || epoch == self.epochs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub samples: usize,
}

/// Index of the largest logit of each row; the first wins ties.
pub fn predictions(logits: &Tensor<f32>) -> Vec<usize> {
    let k = logits.shape().c;
    logits
        .data()
        .chunks_exact(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, f32::NEG_INFINITY),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                )
                .0
        })
        .collect()
}

fn correct(logits: &Tensor<f32>, labels: &[usize]) -> usize {
    predictions(logits).iter().zip(labels).filter(|(p, l)| p == l).count()
}

fn check_classes(model: &Ecn<f32>, data: &Dataset) -> Result<()> {
    let expected = model.plan.config.class_count;
    if data.classes != expected {
        return Err(TrainError::ClassMismatch {
            expected,
            found: data.classes,
        });
    }
    Ok(())
}

/// Eval-mode mean cross-entropy and top-1 accuracy. Batches may run on
/// several threads; their results are combined in dataset order.
pub fn evaluate(model: &Ecn<f32>, norm: &Normalizer, data: &Dataset, batch_size: usize) -> Result<Evaluation> {
    check_classes(model, data)?;
    let mut parts = Batches::sequential(data, norm, batch_size)
        .enumerate()
        .par_bridge()
        .map(|(i, b)| -> Result<(usize, f64, usize)> {
            let mut f = Forward::new(&model.store, Mode::Eval, model.plan.config.bn_eps);
            let x = f.graph.constant(b.images);
            let logits = model.forward(&mut f, x)?;
            let loss = f.graph.softmax_cross_entropy(logits, &b.labels)?;
            let sum = f.graph.value(loss).data()[0] as f64 * b.labels.len() as f64;
            Ok((i, sum, correct(f.graph.value(logits), &b.labels)))
        })
        .collect::<Result<Vec<_>>>()?;
    parts.sort_by_key(|p| p.0);
    let n = data.len();
    let (loss, hits) = parts.iter().fold((0.0, 0), |(l, c), p| (l + p.1, c + p.2));
    Ok(Evaluation {
        loss: loss / n as f64,
        accuracy: hits as f64 / n as f64,
        samples: n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// A model with its optimizer state, positioned after `epoch` completed epochs.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Ecn<f32>,
    pub config: TrainConfig,
    pub normalizer: Normalizer,
    pub optim: OptimState<f32>,
    pub epoch: usize,
    /// Loss of the first batch of the run, the divergence reference.
    pub initial_loss: Option<f64>,
}

impl Trainer {
    pub fn new(model: Ecn<f32>, config: TrainConfig, normalizer: Normalizer) -> Result<Self> {
        config.validate()?;
        if model.plan.config.dropout_rate != config.dropout_rate {
            return Err(TrainError::Config(format!(
                "training dropout {} differs from the network's {}",
                config.dropout_rate, model.plan.config.dropout_rate
            )));
        }
        let optim = OptimState::new(&model.store);
        Ok(Self {
            model,
            config,
            normalizer,
            optim,
            epoch: 0,
            initial_loss: None,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// Learning rate of the next epoch.
    pub fn next_lr(&self) -> f64 {
        lr_at(
            self.config.schedule,
            self.epoch,
            self.config.epochs,
            self.config.base_lr,
        )
    }

    /// Forward in train mode, backward, one SGD step, then the running
    /// statistics update. Returns the batch loss and the number of hits.
    pub fn step(&mut self, batch: &Batch, lr: f64, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
        let cfg = &self.model.plan.config;
        let (eps, bn_momentum) = (cfg.bn_eps, cfg.bn_momentum);
        let mut f = Forward::new(&self.model.store, Mode::Train, eps).with_rng(rng);
        let x = f.graph.constant(batch.images.clone());
        let logits = self.model.forward(&mut f, x)?;
        let loss = f.graph.softmax_cross_entropy(logits, &batch.labels)?;
        let (graph, updates) = f.finish();
        let value = graph.value(loss).data()[0] as f64;
        let hits = correct(graph.value(logits), &batch.labels);
        let grads = graph.backward(loss)?;
        let store = &mut self.model.store;
        store.zero_grads();
        store.accumulate(&graph, &grads)?;
        sgd_step(
            store,
            &mut self.optim,
            SgdConfig {
                lr,
                momentum: self.config.momentum,
                weight_decay: self.config.weight_decay,
            },
        )?;
        apply_stat_updates(store, &updates, bn_momentum);
        Ok((value, hits))
    }

    /// Runs the next epoch and advances the epoch counter.
    pub fn train_epoch(&mut self, data: &Dataset) -> Result<EpochStats> {
        check_classes(&self.model, data)?;
        let (seed, e) = (self.config.seed, self.epoch);
        let lr = self.next_lr();
        let mut dropout_rng = epoch_rng(seed, e, Stream::Dropout);
        let batches = Batches::train(
            data,
            &self.normalizer,
            self.config.batch_size,
            seed,
            e,
            self.config.augment,
        );
        let (mut loss_sum, mut hits) = (0.0, 0);
        for (i, batch) in batches.enumerate() {
            let (loss, h) = self.step(&batch, lr, &mut dropout_rng)?;
            let initial = *self.initial_loss.get_or_insert(loss);
            if !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial {
                return Err(TrainError::Diverged {
                    epoch: e + 1,
                    batch: i,
                    loss,
                    initial,
                });
            }
            loss_sum += loss * batch.labels.len() as f64;
            hits += h;
        }
        self.epoch += 1;
        Ok(EpochStats {
            loss: loss_sum / data.len() as f64,
            accuracy: hits as f64 / data.len() as f64,
        })
    }

    /// Trains the remaining epochs. `after_epoch` sees every record as soon
    /// as it exists, for logging and checkpointing.
    pub fn run(
        &mut self,
        train: &Dataset,
        test: Option<&Dataset>,
        mut after_epoch: impl FnMut(&Trainer, &MetricsRecord) -> Result<()>,
    ) -> Result<Vec<MetricsRecord>> {
        let start = Instant::now();
        let mut records = Vec::new();
        while !self.is_finished() {
            let lr = self.next_lr();
            let stats = self.train_epoch(train)?;
            let eval = match test {
                Some(t) if self.config.evaluates_after(self.epoch) => {
                    Some(evaluate(&self.model, &self.normalizer, t, self.config.batch_size)?)
                }
                _ => None,
            };
            let record = MetricsRecord {
                epoch: self.epoch,
                train_loss: stats.loss,
                train_acc: stats.accuracy,
                test_loss: eval.map(|e| e.loss),
                test_acc: eval.map(|e| e.accuracy),
                lr,
                wall_time: start.elapsed().as_secs_f64(),
            };
            after_epoch(self, &record)?;
            records.push(record);
        }
        Ok(records)
    }
}
