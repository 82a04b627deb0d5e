//! Pre-norm transformer encoder classifier with a hand-written backward pass.
//!
//! tokens ─ affine + sinusoidal PE ─┬─ [LN → MHSA → +] ─ [LN → FF(GELU) → +] ─ … ─ LN ─ mean ─ head

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dropout::{Dropout, DropoutCtx};
use super::params::{xavier, Params};
use super::tensor::{matmul, matmul_nt, matmul_tn_acc, Mat};
use super::{loss, Classifier};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub input_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub emb_dim: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    pub n_classes: usize,
    pub max_tokens: usize,
}

impl TransformerConfig {
    /// Architecture defaults with the given input and output sizes.
    pub fn new(input_dim: usize, n_classes: usize, max_tokens: usize) -> Self {
        Self {
            input_dim,
            layers: 4,
            heads: 8,
            emb_dim: 128,
            ff_dim: 256,
            dropout: 0.1,
            n_classes,
            max_tokens,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.heads == 0 || self.emb_dim % self.heads != 0 {
            return bad(format!("emb_dim {} not divisible by heads {}", self.emb_dim, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.input_dim == 0 || self.ff_dim == 0 || self.n_classes < 2 || self.max_tokens == 0 {
            return bad(format!("degenerate transformer config {self:?}"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.emb_dim / self.heads
    }
}

/// Sinusoidal encoding: channel `2i` is `sin(p / 10000^(2i/d))`, `2i+1` the cosine.
pub fn positional_encoding(tokens: usize, dim: usize) -> Mat {
    Mat::from_fn(tokens, dim, |p, c| {
        let i2 = (c - c % 2) as f64;
        let angle = p as f64 / 10000f64.powf(i2 / dim as f64);
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Scaled dot-product attention `softmax(QKᵀ/√d_k) V` for one head.
pub fn attention(q: &Mat, k: &Mat, v: &Mat) -> Result<Mat> {
    if q.cols != k.cols || k.rows != v.rows {
        return Err(Error::DimensionMismatch {
            expected: q.cols,
            got: k.cols,
        });
    }
    if [q, k, v].iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite("attention inputs".into()));
    }
    let mut scores = matmul_nt(q, k);
    let scale = 1.0 / (q.cols as f64).sqrt();
    scores.data.iter_mut().for_each(|s| *s *= scale);
    softmax_rows(&mut scores);
    Ok(matmul(&scores, v))
}

fn softmax_rows(m: &mut Mat) {
    for r in m.data.chunks_exact_mut(m.cols) {
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in r.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        r.iter_mut().for_each(|v| *v /= sum);
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[derive(Debug, Clone, PartialEq)]
struct LayerIdx {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    emb_w: usize,
    emb_b: usize,
    layers: Vec<LayerIdx>,
    lnf_g: usize,
    lnf_b: usize,
    head_w: usize,
    head_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel {
    pub config: TransformerConfig,
    pub params: Params,
    layout: Layout,
}

struct LnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &Mat, g: &Mat, b: &Mat) -> (Mat, LnCache) {
    let d = x.cols;
    let mut xhat = x.zeros_like();
    let mut out = x.zeros_like();
    let mut inv_std = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let r = x.row(i);
        let mean = r.iter().sum::<f64>() / d as f64;
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        for j in 0..d {
            let h = (r[j] - mean) * is;
            *xhat.at_mut(i, j) = h;
            *out.at_mut(i, j) = h * g.data[j] + b.data[j];
        }
    }
    (out, LnCache { xhat, inv_std })
}

/// Returns dx; accumulates dg, db.
fn layer_norm_back(dy: &Mat, g: &Mat, c: &LnCache, dg: &mut Mat, db: &mut Mat) -> Mat {
    let d = dy.cols;
    let mut dx = dy.zeros_like();
    for i in 0..dy.rows {
        let dyr = dy.row(i);
        let xh = c.xhat.row(i);
        let mut mean_dxh = 0.0;
        let mut mean_dxh_xh = 0.0;
        for j in 0..d {
            let dxh = dyr[j] * g.data[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[j];
            dg.data[j] += dyr[j] * xh[j];
            db.data[j] += dyr[j];
        }
        mean_dxh /= d as f64;
        mean_dxh_xh /= d as f64;
        let out = dx.row_mut(i);
        for j in 0..d {
            let dxh = dyr[j] * g.data[j];
            out[j] = c.inv_std[i] * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
        }
    }
    dx
}

fn affine(x: &Mat, w: &Mat, b: &Mat) -> Mat {
    let mut y = matmul(x, w);
    y.add_row(b);
    y
}

struct LayerCache {
    ln1: LnCache,
    a: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Attention weights per (sample, head), T x T each.
    probs: Vec<Mat>,
    o: Mat,
    drop_attn: Option<Vec<f64>>,
    ln2: LnCache,
    b2in: Mat,
    u: Mat,
    g: Mat,
    drop_ff: Option<Vec<f64>>,
}

struct Cache {
    x: Mat,
    offsets: Vec<(usize, usize)>,
    drop_emb: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    pooled: Mat,
    logits: Mat,
}

impl TransformerModel {
    pub fn new(config: TransformerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, f) = (config.emb_dim, config.ff_dim);
        let mut p = Params::new();
        let row = |n: usize, v: f64| Mat::from_vec(1, n, vec![v; n]);
        let emb_w = p.push("embed.w", xavier(&mut rng, config.input_dim, d));
        let emb_b = p.push("embed.b", row(d, 0.0));
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let n = |s: &str| format!("layer{l}.{s}");
            layers.push(LayerIdx {
                ln1_g: p.push(n("ln1.g"), row(d, 1.0)),
                ln1_b: p.push(n("ln1.b"), row(d, 0.0)),
                wq: p.push(n("attn.wq"), xavier(&mut rng, d, d)),
                bq: p.push(n("attn.bq"), row(d, 0.0)),
                wk: p.push(n("attn.wk"), xavier(&mut rng, d, d)),
                bk: p.push(n("attn.bk"), row(d, 0.0)),
                wv: p.push(n("attn.wv"), xavier(&mut rng, d, d)),
                bv: p.push(n("attn.bv"), row(d, 0.0)),
                wo: p.push(n("attn.wo"), xavier(&mut rng, d, d)),
                bo: p.push(n("attn.bo"), row(d, 0.0)),
                ln2_g: p.push(n("ln2.g"), row(d, 1.0)),
                ln2_b: p.push(n("ln2.b"), row(d, 0.0)),
                w1: p.push(n("ff.w1"), xavier(&mut rng, d, f)),
                b1: p.push(n("ff.b1"), row(f, 0.0)),
                w2: p.push(n("ff.w2"), xavier(&mut rng, f, d)),
                b2: p.push(n("ff.b2"), row(d, 0.0)),
            });
        }
        let lnf_g = p.push("final_ln.g", row(d, 1.0));
        let lnf_b = p.push("final_ln.b", row(d, 0.0));
        let head_w = p.push("head.w", xavier(&mut rng, d, config.n_classes));
        let head_b = p.push("head.b", row(config.n_classes, 0.0));
        Ok(Self {
            config,
            params: p,
            layout: Layout {
                emb_w,
                emb_b,
                layers,
                lnf_g,
                lnf_b,
                head_w,
                head_b,
            },
        })
    }

    /// Rebuild a model around saved parameters (same order as [`Self::new`]).
    pub fn from_params(config: TransformerConfig, params: Params) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        if m.params.names != params.names
            || m.params.tensors.iter().zip(&params.tensors).any(|(a, b)| (a.rows, a.cols) != (b.rows, b.cols))
        {
            return Err(Error::InvalidParameter("parameter layout does not match config".into()));
        }
        m.params = params;
        Ok(m)
    }

    fn p(&self, i: usize) -> &Mat {
        &self.params.tensors[i]
    }

    /// Token embedding: affine projection plus positional encoding.
    pub fn embed_tokens(&self, features: &Mat) -> Result<Mat> {
        self.check_input(features)?;
        let mut e = affine(features, self.p(self.layout.emb_w), self.p(self.layout.emb_b));
        e.add_assign(&positional_encoding(features.rows, self.config.emb_dim));
        Ok(e)
    }

    fn check_input(&self, x: &Mat) -> Result<()> {
        if x.cols != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.cols,
            });
        }
        if x.rows == 0 || x.rows > self.config.max_tokens {
            return Err(Error::InvalidParameter(format!(
                "{} tokens, expected 1..={}",
                x.rows, self.config.max_tokens
            )));
        }
        Ok(())
    }

    /// Logits for one token sequence. `train_mode` enables dropout.
    pub fn forward(&self, tokens: &Mat, dropout: Option<DropoutCtx>) -> Result<Vec<f64>> {
        self.check_input(tokens)?;
        let cache = self.forward_batch(&[tokens], dropout);
        Ok(cache.logits.row(0).to_vec())
    }

    fn forward_batch(&self, batch: &[&Mat], ctx: Option<DropoutCtx>) -> Cache {
        let cfg = &self.config;
        let (d, dk) = (cfg.emb_dim, cfg.head_dim());
        let n: usize = batch.iter().map(|m| m.rows).sum();
        let mut x = Mat::zeros(n, cfg.input_dim);
        let mut offsets = Vec::with_capacity(batch.len());
        let mut r0 = 0;
        for m in batch {
            x.data[r0 * cfg.input_dim..(r0 + m.rows) * cfg.input_dim].copy_from_slice(&m.data);
            offsets.push((r0, m.rows));
            r0 += m.rows;
        }
        let max_t = offsets.iter().map(|o| o.1).max().unwrap_or(0);
        let pe = positional_encoding(max_t, d);

        let mut dropout = ctx.map(|c| Dropout::new(c, cfg.dropout));
        let mut e = affine(&x, self.p(self.layout.emb_w), self.p(self.layout.emb_b));
        for &(s, t) in &offsets {
            for p in 0..t {
                for (a, b) in e.row_mut(s + p).iter_mut().zip(pe.row(p)) {
                    *a += b;
                }
            }
        }
        let drop_emb = dropout.as_mut().and_then(|dr| dr.apply(&mut e));

        let scale = 1.0 / (dk as f64).sqrt();
        let mut layers = Vec::with_capacity(cfg.layers);
        for li in &self.layout.layers {
            let (a, ln1) = layer_norm(&e, self.p(li.ln1_g), self.p(li.ln1_b));
            let q = affine(&a, self.p(li.wq), self.p(li.bq));
            let k = affine(&a, self.p(li.wk), self.p(li.bk));
            let v = affine(&a, self.p(li.wv), self.p(li.bv));
            let mut o = Mat::zeros(n, d);
            let mut probs = Vec::with_capacity(offsets.len() * cfg.heads);
            for &(s, t) in &offsets {
                for h in 0..cfg.heads {
                    let c0 = h * dk;
                    let mut sc = Mat::from_fn(t, t, |i, j| {
                        let qi = &q.row(s + i)[c0..c0 + dk];
                        let kj = &k.row(s + j)[c0..c0 + dk];
                        qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale
                    });
                    softmax_rows(&mut sc);
                    for i in 0..t {
                        let out = &mut o.row_mut(s + i)[c0..c0 + dk];
                        for j in 0..t {
                            let pij = sc.at(i, j);
                            for (oc, vc) in out.iter_mut().zip(&v.row(s + j)[c0..c0 + dk]) {
                                *oc += pij * vc;
                            }
                        }
                    }
                    probs.push(sc);
                }
            }
            let mut z = affine(&o, self.p(li.wo), self.p(li.bo));
            let drop_attn = dropout.as_mut().and_then(|dr| dr.apply(&mut z));
            e.add_assign(&z);

            let (b2in, ln2) = layer_norm(&e, self.p(li.ln2_g), self.p(li.ln2_b));
            let u = affine(&b2in, self.p(li.w1), self.p(li.b1));
            let g = u.map(gelu);
            let mut y = affine(&g, self.p(li.w2), self.p(li.b2));
            let drop_ff = dropout.as_mut().and_then(|dr| dr.apply(&mut y));
            e.add_assign(&y);
            layers.push(LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                o,
                drop_attn,
                ln2,
                b2in,
                u,
                g,
                drop_ff,
            });
        }
        let (fnorm, lnf) = layer_norm(&e, self.p(self.layout.lnf_g), self.p(self.layout.lnf_b));
        let mut pooled = Mat::zeros(offsets.len(), d);
        for (bi, &(s, t)) in offsets.iter().enumerate() {
            let out = pooled.row_mut(bi);
            for p in 0..t {
                for (a, b) in out.iter_mut().zip(fnorm.row(s + p)) {
                    *a += b / t as f64;
                }
            }
        }
        let logits = affine(&pooled, self.p(self.layout.head_w), self.p(self.layout.head_b));
        Cache {
            x,
            offsets,
            drop_emb,
            layers,
            lnf,
            pooled,
            logits,
        }
    }

    fn backward(&self, cache: &Cache, dlogits: &Mat) -> Params {
        let cfg = &self.config;
        let (d, dk) = (cfg.emb_dim, cfg.head_dim());
        let lay = &self.layout;
        let mut grads = self.params.zeros_like();
        let n = cache.x.rows;

        matmul_tn_acc(&cache.pooled, dlogits, &mut grads.tensors[lay.head_w]);
        dlogits.sum_rows_into(&mut grads.tensors[lay.head_b]);
        let dpooled = matmul_nt(dlogits, self.p(lay.head_w));

        let mut dfn = Mat::zeros(n, d);
        for (bi, &(s, t)) in cache.offsets.iter().enumerate() {
            for p in 0..t {
                for (a, b) in dfn.row_mut(s + p).iter_mut().zip(dpooled.row(bi)) {
                    *a = b / t as f64;
                }
            }
        }
        let mut de = {
            let (dg, db) = two_mut(&mut grads.tensors, lay.lnf_g, lay.lnf_b);
            layer_norm_back(&dfn, self.p(lay.lnf_g), &cache.lnf, dg, db)
        };

        let scale = 1.0 / (dk as f64).sqrt();
        for (li, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // feedforward branch
            let mut dy = de.clone();
            if let Some(mask) = &lc.drop_ff {
                dy.data.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
            }
            matmul_tn_acc(&lc.g, &dy, &mut grads.tensors[li.w2]);
            dy.sum_rows_into(&mut grads.tensors[li.b2]);
            let mut du = matmul_nt(&dy, self.p(li.w2));
            du.data.iter_mut().zip(&lc.u.data).for_each(|(g, &u)| *g *= gelu_grad(u));
            matmul_tn_acc(&lc.b2in, &du, &mut grads.tensors[li.w1]);
            du.sum_rows_into(&mut grads.tensors[li.b1]);
            let db2in = matmul_nt(&du, self.p(li.w1));
            let dx2 = {
                let (dg, db) = two_mut(&mut grads.tensors, li.ln2_g, li.ln2_b);
                layer_norm_back(&db2in, self.p(li.ln2_g), &lc.ln2, dg, db)
            };
            de.add_assign(&dx2);

            // attention branch
            let mut dz = de.clone();
            if let Some(mask) = &lc.drop_attn {
                dz.data.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
            }
            matmul_tn_acc(&lc.o, &dz, &mut grads.tensors[li.wo]);
            dz.sum_rows_into(&mut grads.tensors[li.bo]);
            let dout = matmul_nt(&dz, self.p(li.wo));

            let mut dq = Mat::zeros(n, d);
            let mut dkm = Mat::zeros(n, d);
            let mut dv = Mat::zeros(n, d);
            let mut pi = 0;
            for &(s, t) in &cache.offsets {
                for h in 0..cfg.heads {
                    let c0 = h * dk;
                    let p = &lc.probs[pi];
                    pi += 1;
                    // dP = dO Vᵀ ; dV = Pᵀ dO
                    let dp = Mat::from_fn(t, t, |i, j| {
                        let a = &dout.row(s + i)[c0..c0 + dk];
                        let b = &lc.v.row(s + j)[c0..c0 + dk];
                        a.iter().zip(b).map(|(x, y)| x * y).sum()
                    });
                    for j in 0..t {
                        for i in 0..t {
                            let pij = p.at(i, j);
                            let src = &dout.row(s + i)[c0..c0 + dk];
                            let dst = &mut dv.row_mut(s + j)[c0..c0 + dk];
                            for (a, b) in dst.iter_mut().zip(src) {
                                *a += pij * b;
                            }
                        }
                    }
                    // softmax backward, then the 1/sqrt(dk) score scaling
                    for i in 0..t {
                        let dot: f64 = (0..t).map(|j| dp.at(i, j) * p.at(i, j)).sum();
                        for j in 0..t {
                            let ds = p.at(i, j) * (dp.at(i, j) - dot) * scale;
                            if ds == 0.0 {
                                continue;
                            }
                            for c in c0..c0 + dk {
                                *dq.at_mut(s + i, c) += ds * lc.k.at(s + j, c);
                                *dkm.at_mut(s + j, c) += ds * lc.q.at(s + i, c);
                            }
                        }
                    }
                }
            }
            matmul_tn_acc(&lc.a, &dq, &mut grads.tensors[li.wq]);
            dq.sum_rows_into(&mut grads.tensors[li.bq]);
            matmul_tn_acc(&lc.a, &dkm, &mut grads.tensors[li.wk]);
            dkm.sum_rows_into(&mut grads.tensors[li.bk]);
            matmul_tn_acc(&lc.a, &dv, &mut grads.tensors[li.wv]);
            dv.sum_rows_into(&mut grads.tensors[li.bv]);
            let mut da = matmul_nt(&dq, self.p(li.wq));
            da.add_assign(&matmul_nt(&dkm, self.p(li.wk)));
            da.add_assign(&matmul_nt(&dv, self.p(li.wv)));
            let dx1 = {
                let (dg, db) = two_mut(&mut grads.tensors, li.ln1_g, li.ln1_b);
                layer_norm_back(&da, self.p(li.ln1_g), &lc.ln1, dg, db)
            };
            de.add_assign(&dx1);
        }
        if let Some(mask) = &cache.drop_emb {
            de.data.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        matmul_tn_acc(&cache.x, &de, &mut grads.tensors[lay.emb_w]);
        de.sum_rows_into(&mut grads.tensors[lay.emb_b]);
        grads
    }
}

fn two_mut(v: &mut [Mat], a: usize, b: usize) -> (&mut Mat, &mut Mat) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

impl Classifier for TransformerModel {
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
        self.check_input(x)
    }

    fn logits_batch(&self, batch: &[&Mat]) -> Mat {
        self.forward_batch(batch, None).logits
    }

    fn loss_and_grad(&self, batch: &[(&Mat, usize)], dropout: Option<DropoutCtx>) -> (f64, Params) {
        let xs: Vec<&Mat> = batch.iter().map(|b| b.0).collect();
        let cache = self.forward_batch(&xs, dropout);
        let (loss, dlogits) = loss::batch_loss_grad(&cache.logits, batch.iter().map(|b| b.1));
        (loss, self.backward(&cache, &dlogits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny(n_classes: usize) -> TransformerConfig {
        TransformerConfig {
            input_dim: 3,
            layers: 1,
            heads: 2,
            emb_dim: 8,
            ff_dim: 12,
            dropout: 0.1,
            n_classes,
            max_tokens: 4,
        }
    }

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn config_validation() {
        assert!(TransformerConfig::new(32, 4, 9).validate().is_ok());
        assert!(TransformerConfig { heads: 3, ..TransformerConfig::new(32, 4, 9) }.validate().is_err());
        assert!(TransformerConfig { dropout: 1.0, ..TransformerConfig::new(32, 4, 9) }.validate().is_err());
    }

    #[test]
    fn positional_encoding_origin() {
        let pe = positional_encoding(3, 8);
        for c in 0..8 {
            assert_eq!(pe.at(0, c), if c % 2 == 0 { 0.0 } else { 1.0 });
        }
        assert!((pe.at(1, 0) - 1f64.sin()).abs() < 1e-15);
        assert!((pe.at(2, 3) - (2.0 / 10000f64.powf(2.0 / 8.0)).cos()).abs() < 1e-15);
    }

    #[test]
    fn embedding_is_affine_plus_pe() {
        let mut m = TransformerModel::new(tiny(2), 1).unwrap();
        for i in [m.layout.emb_w, m.layout.emb_b] {
            m.params.tensors[i].data.iter_mut().for_each(|v| *v = 0.0);
        }
        let e = m.embed_tokens(&Mat::zeros(3, 3)).unwrap();
        assert_eq!(e, positional_encoding(3, 8));

        // identity-like projection: feature i -> channel i
        let w = &mut m.params.tensors[m.layout.emb_w];
        for i in 0..3 {
            *w.at_mut(i, i) = 1.0;
        }
        let x = Mat::from_vec(1, 3, vec![0.5, -2.0, 3.0]);
        let e = m.embed_tokens(&x).unwrap();
        let pe = positional_encoding(1, 8);
        for c in 0..8 {
            let feat = if c < 3 { x.data[c] } else { 0.0 };
            assert_eq!(e.at(0, c), feat + pe.at(0, c));
        }
        assert!(m.embed_tokens(&Mat::zeros(1, 4)).is_err());
    }

    #[test]
    fn attention_single_token_and_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = rand_mat(&mut rng, 1, 4);
        let k = rand_mat(&mut rng, 1, 4);
        let v = rand_mat(&mut rng, 1, 5);
        assert_eq!(attention(&q, &k, &v).unwrap(), v);

        let q = Mat::from_vec(2, 2, vec![1.0, 0.0, 2.0, 0.0]);
        let k = Mat::from_vec(3, 2, vec![0.0, 1.0, 0.0, -2.0, 0.0, 0.5]);
        let v = rand_mat(&mut rng, 3, 3);
        let out = attention(&q, &k, &v).unwrap();
        for i in 0..2 {
            for c in 0..3 {
                let mean = (v.at(0, c) + v.at(1, c) + v.at(2, c)) / 3.0;
                assert!((out.at(i, c) - mean).abs() < 1e-15);
            }
        }
        let mut bad = q.clone();
        bad.data[0] = f64::NAN;
        assert!(attention(&bad, &k, &v).is_err());
    }

    #[test]
    fn inference_is_deterministic_and_shaped() {
        for classes in [2, 4] {
            let m = TransformerModel::new(tiny(classes), 9).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let x = rand_mat(&mut rng, 4, 3);
            let a = m.forward(&x, None).unwrap();
            let b = m.forward(&x, None).unwrap();
            assert_eq!(a.len(), classes);
            assert_eq!(a, b);
            let batch = m.logits_batch(&[&x, &x]);
            assert_eq!(batch.row(0), a.as_slice());
            assert_eq!(batch.row(1), a.as_slice());
        }
    }

    #[test]
    fn token_order_matters() {
        let m = TransformerModel::new(tiny(2), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_mat(&mut rng, 3, 3);
        let mut swapped = x.clone();
        swapped.row_mut(0).copy_from_slice(x.row(2));
        swapped.row_mut(2).copy_from_slice(x.row(0));
        let a = m.forward(&x, None).unwrap();
        let b = m.forward(&swapped, None).unwrap();
        assert!(a.iter().zip(&b).any(|(p, q)| (p - q).abs() > 1e-9));
    }

    #[test]
    fn dropout_changes_training_logits_reproducibly() {
        let m = TransformerModel::new(tiny(2), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_mat(&mut rng, 3, 3);
        let ctx = DropoutCtx { seed: 5, step: 1 };
        let a = m.forward(&x, Some(ctx)).unwrap();
        let b = m.forward(&x, Some(ctx)).unwrap();
        let c = m.forward(&x, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(m.forward(&Mat::zeros(5, 3), None).is_err());
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let m = TransformerModel::new(tiny(2), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_mat(&mut rng, 4, 3);
        let cache = m.forward_batch(&[&x], None);
        for p in &cache.layers[0].probs {
            for i in 0..p.rows {
                assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for classes in [2, 4] {
            let mut m = TransformerModel::new(tiny(classes), 11).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            // perturb LN gains and biases away from their identity init
            for t in &mut m.params.tensors {
                t.data.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
            }
            let a = rand_mat(&mut rng, 4, 3);
            let b = rand_mat(&mut rng, 2, 3);
            crate::models::gradcheck::check(&mut m, &[(&a, 1), (&b, 0)], 40);
        }
    }

    #[test]
    fn dropout_gradients_match_finite_differences() {
        let mut m = TransformerModel::new(tiny(3), 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = rand_mat(&mut rng, 3, 3);
        let ctx = DropoutCtx { seed: 1, step: 4 };
        let batch = [(&a, 2usize)];
        let (_, g) = m.loss_and_grad(&batch, Some(ctx));
        let h = 1e-5;
        for t in 0..m.params.len() {
            for i in (0..m.params.tensors[t].len()).step_by(7) {
                let orig = m.params.tensors[t].data[i];
                m.params.tensors[t].data[i] = orig + h;
                let lp = m.loss_and_grad(&batch, Some(ctx)).0;
                m.params.tensors[t].data[i] = orig - h;
                let lm = m.loss_and_grad(&batch, Some(ctx)).0;
                m.params.tensors[t].data[i] = orig;
                let num = (lp - lm) / (2.0 * h);
                let an = g.tensors[t].data[i];
                let diff = (num - an).abs();
                assert!(diff < 1e-9 || diff / (num.abs() + an.abs()) < 1e-4, "{} {i}", m.params.names[t]);
            }
        }
    }
}
