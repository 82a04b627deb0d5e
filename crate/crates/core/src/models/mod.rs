//! Sequence classifiers over per-window feature tokens, trained with AdamW.

pub mod adamw;
pub mod checkpoint;
pub mod dropout;
pub mod loss;
pub mod metrics;
pub mod params;
pub mod rnn;
pub mod tensor;
pub mod train;
pub mod transformer;

pub use adamw::{AdamW, AdamWConfig};
pub use checkpoint::{Manifest, ModelSpec};
pub use dropout::DropoutCtx;
pub use metrics::{ClassMetrics, ConfusionMatrix, Metrics};
pub use params::Params;
pub use rnn::{RnnConfig, RnnModel};
pub use tensor::Mat;
pub use train::{evaluate, train, EpochRecord, Sample, TrainConfig, TrainReport};
pub use transformer::{attention, positional_encoding, TransformerConfig, TransformerModel};

use crate::error::Result;

/// A differentiable classifier over a token sequence (`tokens x input_dim`).
pub trait Classifier {
    fn n_classes(&self) -> usize;
    fn params(&self) -> &Params;
    fn params_mut(&mut self) -> &mut Params;

    /// Validate one input sequence.
    fn check(&self, x: &Mat) -> Result<()>;

    /// Inference logits, one row per sequence.
    fn logits_batch(&self, batch: &[&Mat]) -> Mat;

    /// Mean cross-entropy over the batch and its parameter gradient.
    fn loss_and_grad(&self, batch: &[(&Mat, usize)], dropout: Option<DropoutCtx>) -> (f64, Params);

    /// Argmax class per sequence.
    fn predict_batch(&self, batch: &[&Mat]) -> Vec<usize> {
        let logits = self.logits_batch(batch);
        (0..logits.rows).map(|i| argmax(logits.row(i))).collect()
    }
}

/// Either trained model kind behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierModel {
    Transformer(TransformerModel),
    Rnn(RnnModel),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            ClassifierModel::Transformer($m) => $e,
            ClassifierModel::Rnn($m) => $e,
        }
    };
}

impl Classifier for ClassifierModel {
    fn n_classes(&self) -> usize {
        delegate!(self, m => m.n_classes())
    }

    fn params(&self) -> &Params {
        delegate!(self, m => m.params())
    }

    fn params_mut(&mut self) -> &mut Params {
        delegate!(self, m => m.params_mut())
    }

    fn check(&self, x: &Mat) -> Result<()> {
        delegate!(self, m => m.check(x))
    }

    fn logits_batch(&self, batch: &[&Mat]) -> Mat {
        delegate!(self, m => m.logits_batch(batch))
    }

    fn loss_and_grad(&self, batch: &[(&Mat, usize)], dropout: Option<DropoutCtx>) -> (f64, Params) {
        delegate!(self, m => m.loss_and_grad(batch, dropout))
    }
}

/// Index of the largest value; the first one on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
