//! The single JSON experiment config. Every key is optional and defaults to
//! the published hyperparameters; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::koopman::KoopmanConfig;
use crate::models::{RnnConfig, TrainConfig, TransformerConfig};
use crate::wavelet::WaveletSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Common sampling rate every record is resampled to (Hz).
    pub fs: f64,
    pub window_sec: f64,
    pub stride_sec: f64,
    /// Records are truncated to this many seconds before windowing.
    pub record_sec: f64,
    pub koopman: KoopmanConfig,
    pub wavelet: WaveletSpec,
    pub transformer: TransformerArch,
    pub rnn: RnnArch,
    pub train: TrainConfig,
    pub split: SplitConfig,
    /// One training run per seed; the seed drives init, shuffling and dropout.
    pub run_seeds: Vec<u64>,
    pub ablation: AblationConfig,
    pub synth: SynthConfig,
    pub exec: Exec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerArch {
    pub layers: usize,
    pub heads: usize,
    pub emb_dim: usize,
    pub ff_dim: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RnnArch {
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub delay: Vec<usize>,
    pub rbf_centers: Vec<usize>,
    pub rbf_sigma: Vec<f64>,
    pub svd_rank: Vec<usize>,
    /// Seed of the single training run per grid cell.
    pub seed: u64,
    /// Per-cell training budget; the winner is retrained with `train`.
    pub max_epochs: usize,
    pub patience: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub per_class: usize,
    pub duration_sec: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            fs: 125.0,
            window_sec: 2.0,
            stride_sec: 1.0,
            record_sec: 10.0,
            koopman: KoopmanConfig::default(),
            wavelet: WaveletSpec::default(),
            transformer: TransformerArch::default(),
            rnn: RnnArch::default(),
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            run_seeds: (42..=46).collect(),
            ablation: AblationConfig::default(),
            synth: SynthConfig::default(),
            exec: Exec::default(),
        }
    }
}

impl Default for TransformerArch {
    fn default() -> Self {
        let t = TransformerConfig::new(1, 2, 1);
        Self {
            layers: t.layers,
            heads: t.heads,
            emb_dim: t.emb_dim,
            ff_dim: t.ff_dim,
            dropout: t.dropout,
        }
    }
}

impl TransformerArch {
    pub fn config(&self, input_dim: usize, n_classes: usize, max_tokens: usize) -> TransformerConfig {
        TransformerConfig {
            input_dim,
            layers: self.layers,
            heads: self.heads,
            emb_dim: self.emb_dim,
            ff_dim: self.ff_dim,
            dropout: self.dropout,
            n_classes,
            max_tokens,
        }
    }
}

impl Default for RnnArch {
    fn default() -> Self {
        Self {
            hidden: RnnConfig::new(1, 2).hidden,
        }
    }
}

impl RnnArch {
    pub fn config(&self, n_classes: usize) -> RnnConfig {
        RnnConfig {
            input_dim: 1,
            hidden: self.hidden,
            n_classes,
        }
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: [0.70, 0.15, 0.15],
            seed: 42,
        }
    }
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            delay: vec![4, 8, 16],
            rbf_centers: vec![0, 10, 25, 50],
            rbf_sigma: vec![0.1, 0.3, 1.0],
            svd_rank: vec![8, 16, 32],
            seed: 42,
            max_epochs: 10,
            patience: 3,
        }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_class: 50,
            duration_sec: 10.0,
            seed: 1000,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Windows per record at the configured record length.
    pub fn tokens_per_record(&self) -> usize {
        let n = (self.record_sec * self.fs).round() as usize;
        let w = (self.window_sec * self.fs).round() as usize;
        let s = (self.stride_sec * self.fs).round().max(1.0) as usize;
        if n < w {
            0
        } else {
            (n - w) / s + 1
        }
    }

    pub fn window_len(&self) -> usize {
        (self.window_sec * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.fs) || !positive(self.window_sec) || !positive(self.stride_sec) || !positive(self.record_sec) {
            return fail("fs, window_sec, stride_sec and record_sec must be positive".into());
        }
        if self.tokens_per_record() == 0 {
            return fail(format!(
                "record_sec {} is shorter than one {} s window",
                self.record_sec, self.window_sec
            ));
        }
        let [a, b, c] = self.split.ratios;
        if [a, b, c].iter().any(|r| !(*r >= 0.0)) || ((a + b + c) - 1.0).abs() > 1e-9 {
            return fail(format!("split ratios {:?} must be non-negative and sum to 1", self.split.ratios));
        }
        if self.run_seeds.is_empty() {
            return fail("run_seeds is empty".into());
        }
        let g = &self.ablation;
        if g.delay.is_empty() || g.rbf_centers.is_empty() || g.rbf_sigma.is_empty() || g.svd_rank.is_empty() {
            return fail("every ablation axis needs at least one value".into());
        }
        if g.max_epochs == 0 || g.patience == 0 {
            return fail("ablation max_epochs and patience must be at least 1".into());
        }
        let wrap = |r: Result<()>| r.map_err(|e| Error::Config(e.to_string()));
        wrap(self.koopman.dictionary.validate())?;
        wrap(self.train.validate())?;
        wrap(self.transformer.config(1, 2, 1).validate())?;
        wrap(self.rnn.config(2).validate())?;
        if self.koopman.top_k == 0 || self.koopman.fit.svd_rank == 0 {
            return fail("koopman top_k and svd_rank must be at least 1".into());
        }
        let wl = WaveletSpec::max_levels(self.wavelet.family, self.window_len());
        if self.wavelet.levels == 0 || self.wavelet.levels > wl {
            return fail(format!(
                "wavelet levels {} outside 1..={wl} for {}-sample windows",
                self.wavelet.levels,
                self.window_len()
            ));
        }
        if self.synth.per_class == 0 || !(self.synth.duration_sec >= 4.0) {
            return fail("synth needs per_class >= 1 and duration_sec >= 4".into());
        }
        Ok(())
    }
}
