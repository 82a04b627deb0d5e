//! The five compared systems and single training runs.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::koopman::KoopmanConfig;
use crate::models::{evaluate, train, ClassifierModel, Mat, Metrics, RnnModel, Sample, TrainConfig, TrainReport, TransformerModel};

use super::ablation::{run_ablation, AblationResult};
use super::config::ExperimentConfig;
use super::dataset::{Dataset, Record};
use super::features::{raw_sequences, sequences, FeatureKind, FeatureSpec, Standardizer};
use super::labels::Task;
use super::split::DatasetSplit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum System {
    WaveletTx,
    KoopmanTx,
    HybridTx,
    KoopmanTxAblated,
    RnnRaw,
}

impl System {
    pub const ALL: [System; 5] = [
        System::WaveletTx,
        System::KoopmanTx,
        System::HybridTx,
        System::KoopmanTxAblated,
        System::RnnRaw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            System::WaveletTx => "WaveletTx",
            System::KoopmanTx => "KoopmanTx",
            System::HybridTx => "HybridTx",
            System::KoopmanTxAblated => "KoopmanTxAblated",
            System::RnnRaw => "RnnRaw",
        }
    }

    /// Method column of the published results table.
    pub fn description(self) -> &'static str {
        match self {
            System::WaveletTx => "Wavelet + Transformer",
            System::KoopmanTx => "Koopman + Transformer",
            System::HybridTx => "Hybrid (Wavelet + Koopman) + Transformer",
            System::KoopmanTxAblated => "Koopman + Transformer (After ablation)",
            System::RnnRaw => "RNN (Raw ECG, baseline)",
        }
    }

    /// Published F1 (mean, std) on the full clinical dataset, for reference only.
    pub fn paper_f1(self, task: Task) -> (f64, f64) {
        match (self, task) {
            (System::WaveletTx, Task::Binary) => (0.750, 0.02),
            (System::WaveletTx, Task::Four) => (0.700, 0.03),
            (System::KoopmanTx, Task::Binary) => (0.697, 0.01),
            (System::KoopmanTx, Task::Four) => (0.771, 0.02),
            (System::HybridTx, Task::Binary) => (0.677, 0.01),
            (System::HybridTx, Task::Four) => (0.533, 0.02),
            (System::KoopmanTxAblated, Task::Binary) => (0.786, 0.01),
            (System::KoopmanTxAblated, Task::Four) => (0.764, 0.02),
            (System::RnnRaw, Task::Binary) => (0.782, 0.01),
            (System::RnnRaw, Task::Four) => (0.700, 0.02),
        }
    }

    pub fn feature_kind(self) -> Option<FeatureKind> {
        match self {
            System::WaveletTx => Some(FeatureKind::Wavelet),
            System::KoopmanTx | System::KoopmanTxAblated => Some(FeatureKind::Koopman),
            System::HybridTx => Some(FeatureKind::Hybrid),
            System::RnnRaw => None,
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        System::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown system `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub metrics: Metrics,
    pub train: TrainReport,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub system: System,
    pub task: Task,
    pub runs: Vec<RunResult>,
    /// Grid results for [`System::KoopmanTxAblated`].
    pub ablation: Option<AblationResult>,
}

impl ExperimentReport {
    pub fn macro_f1s(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.metrics.macro_f1).collect()
    }

    pub fn mean(&self) -> f64 {
        let v = self.macro_f1s();
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Population standard deviation over runs.
    pub fn std(&self) -> f64 {
        let v = self.macro_f1s();
        let m = self.mean();
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    }
}

/// Tokens and labels of one split.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub x: Vec<Mat>,
    pub y: Vec<usize>,
}

impl SplitData {
    fn samples(&self) -> Vec<Sample> {
        self.x.iter().zip(&self.y).map(|(x, &label)| Sample { x: x.clone(), label }).collect()
    }
}

/// A model together with what is needed to featurize new records for it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: ClassifierModel,
    pub features: Option<FeatureSpec>,
    pub standardizer: Option<Standardizer>,
    pub report: TrainReport,
}

/// What a system trains on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Input {
    Features(FeatureSpec),
    Raw,
}

impl Input {
    pub fn for_system(system: System, cfg: &ExperimentConfig, koopman: KoopmanConfig) -> Self {
        match system.feature_kind() {
            Some(kind) => Input::Features(FeatureSpec {
                kind,
                koopman,
                wavelet: cfg.wavelet,
                fs: cfg.fs,
            }),
            None => Input::Raw,
        }
    }

    /// Sequences for `records`, unstandardized.
    pub fn encode(&self, records: &[&Record], exec: Exec) -> Result<Vec<Mat>> {
        match self {
            Input::Features(spec) => sequences(records, spec, exec),
            Input::Raw => Ok(raw_sequences(records)),
        }
    }
}

/// Encode the records of one split for `input`.
pub fn encode_records(input: &Input, records: &[&Record], exec: Exec) -> Result<SplitData> {
    Ok(SplitData {
        x: input.encode(records, exec)?,
        y: records.iter().map(|r| r.label).collect(),
    })
}

/// Train one model from already-encoded splits. Feature tokens are
/// standardized with statistics of `tr` only.
pub fn train_one(
    input: &Input,
    tr: &SplitData,
    va: &SplitData,
    n_classes: usize,
    cfg: &ExperimentConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let (mut trx, mut vax) = (tr.clone(), va.clone());
    let standardizer = match input {
        Input::Features(_) => {
            let s = Standardizer::fit(&trx.x)?;
            s.apply_all(&mut trx.x);
            s.apply_all(&mut vax.x);
            Some(s)
        }
        Input::Raw => None,
    };
    let mut model = match input {
        Input::Features(spec) => {
            let max_tokens = trx.x.iter().chain(&vax.x).map(|m| m.rows).max().unwrap_or(1);
            let tc = cfg.transformer.config(spec.dim(), n_classes, max_tokens.max(cfg.tokens_per_record()));
            ClassifierModel::Transformer(TransformerModel::new(tc, train_cfg.seed)?)
        }
        Input::Raw => ClassifierModel::Rnn(RnnModel::new(cfg.rnn.config(n_classes), train_cfg.seed)?),
    };
    let report = train(&mut model, &trx.samples(), &vax.samples(), train_cfg)?;
    Ok(TrainedModel {
        model,
        features: match input {
            Input::Features(s) => Some(*s),
            Input::Raw => None,
        },
        standardizer,
        report,
    })
}

impl TrainedModel {
    /// Metrics on raw (unstandardized) sequences.
    pub fn evaluate(&self, data: &SplitData) -> Result<Metrics> {
        let mut x = data.x.clone();
        if let Some(s) = &self.standardizer {
            s.apply_all(&mut x);
        }
        let samples: Vec<Sample> = x.into_iter().zip(&data.y).map(|(x, &label)| Sample { x, label }).collect();
        Ok(evaluate(&self.model, &samples)?.1)
    }
}

/// Train and test `system` once per configured run seed.
pub fn run_system(system: System, data: &Dataset, split: &DatasetSplit, cfg: &ExperimentConfig, exec: Exec) -> Result<ExperimentReport> {
    let ctx = |e: Error| e.context(format!("system {system}"));
    let train_recs = data.select(&split.train);
    let val_recs = data.select(&split.val);
    let test_recs = data.select(&split.test);
    if test_recs.is_empty() || val_recs.is_empty() {
        return Err(Error::Data(format!(
            "split has {} validation and {} test records",
            val_recs.len(),
            test_recs.len()
        )));
    }
    let (koopman, ablation) = if system == System::KoopmanTxAblated {
        let result = run_ablation(&cfg.ablation, &train_recs, &val_recs, data.n_classes(), cfg, exec).map_err(ctx)?;
        (result.winner_config(cfg.koopman), Some(result))
    } else {
        (cfg.koopman, None)
    };
    let input = Input::for_system(system, cfg, koopman);
    let tr = encode_records(&input, &train_recs, exec).map_err(ctx)?;
    let va = encode_records(&input, &val_recs, exec).map_err(ctx)?;
    let te = encode_records(&input, &test_recs, exec).map_err(ctx)?;
    let runs = exec::map(exec, &cfg.run_seeds, |&seed| {
        let start = Instant::now();
        let tc = TrainConfig { seed, ..cfg.train };
        let trained = train_one(&input, &tr, &va, data.n_classes(), cfg, &tc)
            .map_err(|e| e.context(format!("system {system}, run seed {seed}")))?;
        let metrics = trained.evaluate(&te)?;
        log::info!("{system} seed {seed}: test macro-F1 {:.4}", metrics.macro_f1);
        Ok(RunResult {
            seed,
            metrics,
            train: trained.report,
            wall_clock_s: start.elapsed().as_secs_f64(),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        system,
        task: data.task,
        runs,
        ablation,
    })
}

/// All five systems in table order.
pub fn compare(data: &Dataset, split: &DatasetSplit, cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<ExperimentReport>> {
    System::ALL.into_iter().map(|s| run_system(s, data, split, cfg, exec)).collect()
}
