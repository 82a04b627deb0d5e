//! Per-window feature tokens and train-fitted standardization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::koopman::{self, KoopmanConfig};
use crate::models::Mat;
use crate::signal::WindowSet;
use crate::wavelet::{self, WaveletSpec};

use super::dataset::Record;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Koopman,
    Wavelet,
    /// Wavelet then Koopman features, concatenated per window.
    Hybrid,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Koopman => "koopman",
            FeatureKind::Wavelet => "wavelet",
            FeatureKind::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "koopman" => Ok(FeatureKind::Koopman),
            "wavelet" => Ok(FeatureKind::Wavelet),
            "hybrid" => Ok(FeatureKind::Hybrid),
            _ => Err(Error::Config(format!("unknown feature kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub koopman: KoopmanConfig,
    pub wavelet: WaveletSpec,
    pub fs: f64,
}

impl FeatureSpec {
    pub fn dim(&self) -> usize {
        match self.kind {
            FeatureKind::Koopman => self.koopman.feature_len(),
            FeatureKind::Wavelet => self.wavelet.feature_len(),
            FeatureKind::Hybrid => self.wavelet.feature_len() + self.koopman.feature_len(),
        }
    }

    /// CSV column names, in feature order.
    pub fn names(&self) -> Vec<String> {
        let kp = || {
            (1..=self.koopman.top_k).flat_map(|k| ["re", "im", "mag", "growth"].map(|n| format!("{n}_{k}")))
        };
        let wv = || {
            (0..=self.wavelet.levels).flat_map(|b| ["logE", "mean", "std", "maxabs"].map(|n| format!("band_{b}_{n}")))
        };
        match self.kind {
            FeatureKind::Koopman => kp().collect(),
            FeatureKind::Wavelet => wv().collect(),
            FeatureKind::Hybrid => wv().chain(kp()).collect(),
        }
    }

    pub fn window(&self, window: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            FeatureKind::Koopman => koopman::window_features(window, self.fs, &self.koopman),
            FeatureKind::Wavelet => wavelet::window_features(window, self.wavelet),
            FeatureKind::Hybrid => {
                let mut v = wavelet::window_features(window, self.wavelet)?;
                v.extend(koopman::window_features(window, self.fs, &self.koopman)?);
                Ok(v)
            }
        }
    }

    /// One token row per window.
    pub fn tokens(&self, windows: &WindowSet) -> Result<Mat> {
        let mut data = Vec::with_capacity(windows.len() * self.dim());
        for (i, w) in windows.windows.iter().enumerate() {
            data.extend(self.window(w).map_err(|e| e.context(format!("window {i}")))?);
        }
        Ok(Mat::from_vec(windows.len(), self.dim(), data))
    }
}

/// Token matrices for `records`, in order.
pub fn sequences(records: &[&Record], spec: &FeatureSpec, exec: Exec) -> Result<Vec<Mat>> {
    exec::map(exec, records, |r| {
        spec.tokens(&r.windows).map_err(|e| e.context(format!("{} features of {}", spec.kind, r.file)))
    })
    .into_iter()
    .collect()
}

/// Koopman token matrices for `records` at each of `ranks`, indexed
/// `[rank][record]`. Each window is lifted and decomposed once.
pub fn koopman_sequences_by_rank(
    records: &[&Record],
    koopman: &KoopmanConfig,
    fs: f64,
    ranks: &[usize],
    exec: Exec,
) -> Result<Vec<Vec<Mat>>> {
    let dim = koopman.feature_len();
    let per_record = exec::map(exec, records, |r| {
        let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(r.windows.len() * dim); ranks.len()];
        for (i, w) in r.windows.windows.iter().enumerate() {
            let feats = koopman::window_features_by_rank(w, fs, koopman, ranks)
                .map_err(|e| e.context(format!("koopman features of {}, window {i}", r.file)))?;
            for (acc, f) in rows.iter_mut().zip(feats) {
                acc.extend(f);
            }
        }
        Ok(rows.into_iter().map(|d| Mat::from_vec(r.windows.len(), dim, d)).collect::<Vec<_>>())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<Vec<Mat>> = (0..ranks.len()).map(|_| Vec::with_capacity(records.len())).collect();
    for mats in per_record {
        for (acc, m) in out.iter_mut().zip(mats) {
            acc.push(m);
        }
    }
    Ok(out)
}

/// Raw-sample sequences for the RNN: one single-value token per sample.
pub fn raw_sequences(records: &[&Record]) -> Vec<Mat> {
    records
        .iter()
        .map(|r| Mat::from_vec(r.signal.len(), 1, r.signal.samples().to_vec()))
        .collect()
}

/// Per-column affine standardization fitted on training tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(seqs: &[Mat]) -> Result<Self> {
        let dim = seqs.first().map(|m| m.cols).ok_or_else(|| Error::Data("no training sequences".into()))?;
        let rows: Vec<&[f64]> = seqs.iter().flat_map(|m| (0..m.rows).map(move |i| m.row(i))).collect();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            mean.iter_mut().zip(*r).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; dim];
        for r in &rows {
            var.iter_mut().zip(*r).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m) / n);
        }
        // constant columns are centred but not scaled
        let scale = var.into_iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, m: &mut Mat) {
        for i in 0..m.rows {
            for ((v, mu), s) in m.row_mut(i).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - mu) / s;
            }
        }
    }

    pub fn apply_all(&self, seqs: &mut [Mat]) {
        seqs.iter_mut().for_each(|m| self.apply(m));
    }
}
