//! Single-layer tanh RNN over raw samples: `h_t = tanh(x_t W_x + h_{t-1} W_h + b)`,
//! logits from the final hidden state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dropout::DropoutCtx;
use super::params::{xavier, Params};
use super::tensor::{matmul, matmul_nt, matmul_tn_acc, Mat};
use super::{loss, Classifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub n_classes: usize,
}

impl RnnConfig {
    pub fn new(input_dim: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            hidden: 64,
            n_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.n_classes < 2 {
            return Err(Error::InvalidParameter(format!("degenerate RNN config {self:?}")));
        }
        Ok(())
    }
}

const WX: usize = 0;
const WH: usize = 1;
const B: usize = 2;
const HEAD_W: usize = 3;
const HEAD_B: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    pub config: RnnConfig,
    pub params: Params,
}

impl RnnModel {
    pub fn new(config: RnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        let mut p = Params::new();
        p.push("rnn.wx", xavier(&mut rng, config.input_dim, h));
        p.push("rnn.wh", xavier(&mut rng, h, h));
        p.push("rnn.b", Mat::zeros(1, h));
        p.push("head.w", xavier(&mut rng, h, config.n_classes));
        p.push("head.b", Mat::zeros(1, config.n_classes));
        Ok(Self { config, params: p })
    }

    pub fn from_params(config: RnnConfig, params: Params) -> Result<Self> {
        let m = Self::new(config, 0)?;
        if m.params.names != params.names
            || m.params.tensors.iter().zip(&params.tensors).any(|(a, b)| (a.rows, a.cols) != (b.rows, b.cols))
        {
            return Err(Error::InvalidParameter("parameter layout does not match config".into()));
        }
        Ok(Self { config, params })
    }

    fn p(&self, i: usize) -> &Mat {
        &self.params.tensors[i]
    }

    /// Logits for one sequence (`steps x input_dim`).
    pub fn forward(&self, samples: &Mat) -> Result<Vec<f64>> {
        self.check(samples)?;
        Ok(self.logits_batch(&[samples]).data)
    }

    /// Hidden states `h_0 ..= h_T` for a batch of equal-length sequences.
    fn run(&self, batch: &[&Mat]) -> (Vec<Mat>, Vec<Mat>) {
        let steps = batch[0].rows;
        let d = self.config.input_dim;
        let mut xs = Vec::with_capacity(steps);
        let mut hs = Vec::with_capacity(steps + 1);
        hs.push(Mat::zeros(batch.len(), self.config.hidden));
        for t in 0..steps {
            let mut x = Mat::zeros(batch.len(), d);
            for (i, s) in batch.iter().enumerate() {
                x.row_mut(i).copy_from_slice(s.row(t));
            }
            let mut pre = matmul(&x, self.p(WX));
            pre.add_assign(&matmul(&hs[t], self.p(WH)));
            pre.add_row(self.p(B));
            hs.push(pre.map(f64::tanh));
            xs.push(x);
        }
        (xs, hs)
    }

    fn head(&self, h: &Mat) -> Mat {
        let mut logits = matmul(h, self.p(HEAD_W));
        logits.add_row(self.p(HEAD_B));
        logits
    }

    fn batch_grad(&self, batch: &[(&Mat, usize)], grads: &mut Params) -> f64 {
        let xs_in: Vec<&Mat> = batch.iter().map(|b| b.0).collect();
        let (xs, hs) = self.run(&xs_in);
        let last = hs.last().expect("at least h_0");
        let logits = self.head(last);
        let (loss, dlogits) = loss::batch_loss_grad(&logits, batch.iter().map(|b| b.1));
        matmul_tn_acc(last, &dlogits, &mut grads.tensors[HEAD_W]);
        dlogits.sum_rows_into(&mut grads.tensors[HEAD_B]);
        let mut dh = matmul_nt(&dlogits, self.p(HEAD_W));
        for t in (0..xs.len()).rev() {
            let mut dpre = dh;
            dpre.data.iter_mut().zip(&hs[t + 1].data).for_each(|(g, h)| *g *= 1.0 - h * h);
            matmul_tn_acc(&xs[t], &dpre, &mut grads.tensors[WX]);
            matmul_tn_acc(&hs[t], &dpre, &mut grads.tensors[WH]);
            dpre.sum_rows_into(&mut grads.tensors[B]);
            dh = matmul_nt(&dpre, self.p(WH));
        }
        loss
    }
}

/// Split indices into runs of equal sequence length, preserving order.
fn length_groups(lens: impl Iterator<Item = usize>) -> Vec<Vec<usize>> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, l) in lens.enumerate() {
        match groups.iter_mut().find(|g| g.0 == l) {
            Some(g) => g.1.push(i),
            None => groups.push((l, vec![i])),
        }
    }
    groups.into_iter().map(|g| g.1).collect()
}

impl Classifier for RnnModel {
    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn params(&self) -> &Params {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn check(&self, x: &Mat) -> Result<()> {
        if x.rows == 0 {
            return Err(Error::InvalidParameter("empty sequence".into()));
        }
        if x.cols != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.cols,
            });
        }
        Ok(())
    }

    fn logits_batch(&self, batch: &[&Mat]) -> Mat {
        let mut out = Mat::zeros(batch.len(), self.config.n_classes);
        for group in length_groups(batch.iter().map(|m| m.rows)) {
            let sub: Vec<&Mat> = group.iter().map(|&i| batch[i]).collect();
            let (_, hs) = self.run(&sub);
            let logits = self.head(hs.last().expect("at least h_0"));
            for (k, &i) in group.iter().enumerate() {
                out.row_mut(i).copy_from_slice(logits.row(k));
            }
        }
        out
    }

    /// The RNN has no dropout; `dropout` is ignored.
    fn loss_and_grad(&self, batch: &[(&Mat, usize)], _dropout: Option<DropoutCtx>) -> (f64, Params) {
        let mut grads = self.params.zeros_like();
        let groups = length_groups(batch.iter().map(|b| b.0.rows));
        if groups.len() == 1 {
            let loss = self.batch_grad(batch, &mut grads);
            return (loss, grads);
        }
        // per-group means, reweighted to the mean over the whole batch
        let mut total = 0.0;
        for group in groups {
            let sub: Vec<(&Mat, usize)> = group.iter().map(|&i| batch[i]).collect();
            let mut g = self.params.zeros_like();
            let w = sub.len() as f64 / batch.len() as f64;
            total += w * self.batch_grad(&sub, &mut g);
            g.scale(w);
            grads.add_assign(&g);
        }
        (total, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn seq(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Mat {
        Mat::from_vec(t, d, (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zero_weights_give_head_bias() {
        let mut m = RnnModel::new(RnnConfig::new(1, 4), 1).unwrap();
        for t in &mut m.params.tensors {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        m.params.tensors[HEAD_B].data = vec![0.5, -1.0, 2.0, 0.0];
        let x = Mat::from_vec(5, 1, vec![1.0, -2.0, 3.0, 0.5, 9.0]);
        assert_eq!(m.forward(&x).unwrap(), vec![0.5, -1.0, 2.0, 0.0]);
    }

    #[test]
    fn zero_input_zero_bias_is_fixed_point() {
        let mut m = RnnModel::new(RnnConfig::new(1, 2), 3).unwrap();
        m.params.tensors[HEAD_B].data = vec![0.25, -0.75];
        let logits = m.forward(&Mat::zeros(50, 1)).unwrap();
        assert_eq!(logits, vec![0.25, -0.75]);
    }

    #[test]
    fn single_step_by_hand() {
        let cfg = RnnConfig {
            input_dim: 1,
            hidden: 2,
            n_classes: 2,
        };
        let params = {
            let mut p = Params::new();
            p.push("rnn.wx", Mat::from_vec(1, 2, vec![0.5, -1.0]));
            p.push("rnn.wh", Mat::from_vec(2, 2, vec![9.0, 9.0, 9.0, 9.0]));
            p.push("rnn.b", Mat::from_vec(1, 2, vec![0.1, 0.2]));
            p.push("head.w", Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
            p.push("head.b", Mat::from_vec(1, 2, vec![0.0, 1.0]));
            p
        };
        let m = RnnModel::from_params(cfg, params).unwrap();
        let x = 0.8;
        let h = [(0.5 * x + 0.1f64).tanh(), (-1.0 * x + 0.2f64).tanh()];
        let want = [h[0] + 3.0 * h[1], 2.0 * h[0] + 4.0 * h[1] + 1.0];
        let got = m.forward(&Mat::from_vec(1, 1, vec![x])).unwrap();
        assert!((got[0] - want[0]).abs() < 1e-15 && (got[1] - want[1]).abs() < 1e-15);
        assert!(m.forward(&Mat::zeros(0, 1)).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = RnnConfig {
            input_dim: 2,
            hidden: 5,
            n_classes: 3,
        };
        let mut m = RnnModel::new(cfg, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        m.params.tensors[B].data.iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
        let a = seq(&mut rng, 6, 2);
        let b = seq(&mut rng, 6, 2);
        let c = seq(&mut rng, 3, 2);
        crate::models::gradcheck::check(&mut m, &[(&a, 2), (&b, 0), (&c, 1)], 100);
    }

    #[test]
    fn duplicating_batch_keeps_mean_gradient() {
        let m = RnnModel::new(RnnConfig::new(1, 2), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = seq(&mut rng, 10, 1);
        let (l1, g1) = m.loss_and_grad(&[(&a, 1)], None);
        let (l2, g2) = m.loss_and_grad(&[(&a, 1), (&a, 1)], None);
        assert!((l1 - l2).abs() < 1e-14);
        for (x, y) in g1.tensors.iter().zip(&g2.tensors) {
            assert!(x.data.iter().zip(&y.data).all(|(p, q)| (p - q).abs() < 1e-14));
        }
    }
}
