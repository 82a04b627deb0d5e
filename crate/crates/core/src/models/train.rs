//! Mini-batch training with seeded shuffling and early stopping on
//! validation loss.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adamw::{AdamW, AdamWConfig};
use super::dropout::DropoutCtx;
use super::loss::cross_entropy;
use super::metrics::Metrics;
use super::params::Params;
use super::tensor::Mat;
use super::Classifier;
use crate::error::{Error, Result};

/// Minimum decrease in validation loss that counts as an improvement.
pub const MIN_DELTA: f64 = 1e-6;

/// Samples scored per inference batch.
const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Mat,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            betas: (0.9, 0.999),
            weight_decay: 0.01,
            batch: 32,
            max_epochs: 100,
            patience: 10,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.betas;
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.patience >= 1
            && self.batch >= 1
            && self.max_epochs >= 1
            && (0.0..1.0).contains(&b1)
            && (0.0..1.0).contains(&b2)
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid training config {self:?}")))
        }
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            betas: self.betas,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Patience counter over a stream of validation losses.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Verdict {
        if val_loss < self.best - MIN_DELTA {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.wait = 0;
            Verdict::Improved
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

/// Mean loss and metrics of `model` over `set` with dropout off.
pub fn evaluate<M: Classifier>(model: &M, set: &[Sample]) -> Result<(f64, Metrics)> {
    if set.is_empty() {
        return Err(Error::InvalidParameter("empty evaluation set".into()));
    }
    let mut loss = 0.0;
    let mut truth = Vec::with_capacity(set.len());
    let mut pred = Vec::with_capacity(set.len());
    for chunk in set.chunks(EVAL_BATCH) {
        let xs: Vec<&Mat> = chunk.iter().map(|s| &s.x).collect();
        let logits = model.logits_batch(&xs);
        for (i, s) in chunk.iter().enumerate() {
            loss += cross_entropy(logits.row(i), s.label);
            truth.push(s.label);
            pred.push(super::argmax(logits.row(i)));
        }
    }
    Ok((
        loss / set.len() as f64,
        Metrics::from_predictions(model.n_classes(), &truth, &pred),
    ))
}

/// Train in place; on return `model` holds the best-validation weights.
pub fn train<M: Classifier>(model: &mut M, train_set: &[Sample], val_set: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "empty split: {} train, {} val",
            train_set.len(),
            val_set.len()
        )));
    }
    for s in train_set.iter().chain(val_set) {
        model.check(&s.x)?;
        if s.label >= model.n_classes() {
            return Err(Error::InvalidParameter(format!(
                "label {} with {} classes",
                s.label,
                model.n_classes()
            )));
        }
    }

    let mut opt = AdamW::new(cfg.optimizer(), model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best: Params = model.params().clone();
    let mut history = Vec::new();
    let mut stopped_early = false;
    let mut step = 0u64;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch) {
            let batch: Vec<(&Mat, usize)> = idx.iter().map(|&i| (&train_set[i].x, train_set[i].label)).collect();
            step += 1;
            let ctx = DropoutCtx { seed: cfg.seed, step };
            let (loss, grads) = model.loss_and_grad(&batch, Some(ctx));
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("training loss {loss} at step {step}"),
                });
            }
            opt.step(model.params_mut(), &grads).map_err(|e| Error::Diverged {
                epoch,
                detail: e.to_string(),
            })?;
            total += loss * idx.len() as f64;
        }
        let (val_loss, val) = evaluate(model, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation loss {val_loss}"),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_loss,
            val_macro_f1: val.macro_f1,
        });
        log::debug!("epoch {epoch}: train {:.5} val {val_loss:.5} f1 {:.4}", total / train_set.len() as f64, val.macro_f1);
        match stopper.observe(epoch, val_loss) {
            Verdict::Improved => best.clone_from(model.params()),
            Verdict::Continue => {}
            Verdict::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    *model.params_mut() = best;
    let (best_epoch, best_val_loss) = stopper.best();
    Ok(TrainReport {
        history,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}

/// Write `epoch,train_loss,val_loss,val_macro_f1` rows.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,train_loss,val_loss,val_macro_f1")?;
    for r in history {
        writeln!(f, "{},{:.17e},{:.17e},{:.17e}", r.epoch, r.train_loss, r.val_loss, r.val_macro_f1)?;
    }
    f.flush()?;
    Ok(())
}
