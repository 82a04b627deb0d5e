//! EDMD hyperparameter grid search on the validation split.
//!
//! [`run_ablation`] never sees test records: it takes the training and
//! validation records only.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::koopman::KoopmanConfig;
use crate::models::TrainConfig;

use super::config::{AblationConfig, ExperimentConfig};
use super::dataset::Record;
use super::features::{koopman_sequences_by_rank, FeatureKind, FeatureSpec};
use super::systems::{train_one, Input, SplitData};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub delay: usize,
    pub rbf_centers: usize,
    pub rbf_sigma: f64,
    pub svd_rank: usize,
}

impl GridPoint {
    pub fn apply(&self, base: KoopmanConfig) -> KoopmanConfig {
        let mut k = base;
        k.dictionary.delay = self.delay;
        k.dictionary.rbf_centers = self.rbf_centers;
        k.dictionary.rbf_sigma = self.rbf_sigma;
        k.fit.svd_rank = self.svd_rank;
        k
    }

    /// Points that yield identical features share a key: with no RBF
    /// centers the bandwidth is unused.
    fn feature_key(&self) -> (usize, usize, u64, usize) {
        let sigma = if self.rbf_centers == 0 { 0 } else { self.rbf_sigma.to_bits() };
        (self.delay, self.rbf_centers, sigma, self.svd_rank)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub point: GridPoint,
    /// NaN when the cell failed.
    pub val_macro_f1: f64,
    pub val_loss: f64,
    pub best_epoch: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub cells: Vec<AblationCell>,
    pub winner: usize,
}

impl AblationResult {
    pub fn winner(&self) -> &AblationCell {
        &self.cells[self.winner]
    }

    pub fn winner_config(&self, base: KoopmanConfig) -> KoopmanConfig {
        self.winner().point.apply(base)
    }

    /// The cell matching `point`, if the grid contains it.
    pub fn find(&self, point: &GridPoint) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.point.feature_key() == point.feature_key())
    }
}

/// Full Cartesian product in axis order delay, centers, sigma, rank.
pub fn grid_points(grid: &AblationConfig) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &delay in &grid.delay {
        for &rbf_centers in &grid.rbf_centers {
            for &rbf_sigma in &grid.rbf_sigma {
                for &svd_rank in &grid.svd_rank {
                    out.push(GridPoint {
                        delay,
                        rbf_centers,
                        rbf_sigma,
                        svd_rank,
                    });
                }
            }
        }
    }
    out
}

/// Index of the best cell: highest validation macro-F1, ties to the smaller
/// (delay, rbf_centers, svd_rank), then the smaller bandwidth. NaN cells never win.
pub fn select_winner(cells: &[AblationCell]) -> Option<usize> {
    let key = |c: &AblationCell| (c.point.delay, c.point.rbf_centers, c.point.svd_rank);
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if !c.val_macro_f1.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let o = &cells[b];
                let better = c.val_macro_f1 > o.val_macro_f1
                    || (c.val_macro_f1 == o.val_macro_f1
                        && (key(c), c.point.rbf_sigma.to_bits()) < (key(o), o.point.rbf_sigma.to_bits()));
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// Encoded train and validation splits, or why encoding failed.
type Encoded = std::result::Result<(SplitData, SplitData), String>;

fn failed(point: &GridPoint, e: String) -> AblationCell {
    log::warn!("ablation cell {point:?} failed: {e}");
    AblationCell {
        point: *point,
        val_macro_f1: f64::NAN,
        val_loss: f64::NAN,
        best_epoch: 0,
        error: Some(e),
    }
}

fn eval_point(
    point: &GridPoint,
    data: &Encoded,
    n_classes: usize,
    cfg: &ExperimentConfig,
    train_cfg: &TrainConfig,
) -> AblationCell {
    let input = Input::Features(FeatureSpec {
        kind: FeatureKind::Koopman,
        koopman: point.apply(cfg.koopman),
        wavelet: cfg.wavelet,
        fs: cfg.fs,
    });
    let (tr, va) = match data {
        Ok(d) => d,
        Err(e) => return failed(point, e.clone()),
    };
    let outcome = train_one(&input, tr, va, n_classes, cfg, train_cfg)
        .and_then(|trained| Ok((trained.evaluate(va)?.macro_f1, trained.report)));
    match outcome {
        Ok((f1, report)) => AblationCell {
            point: *point,
            val_macro_f1: f1,
            val_loss: report.best_val_loss,
            best_epoch: report.best_epoch,
            error: None,
        },
        Err(e) => failed(point, e.to_string()),
    }
}

/// Encoded train and validation splits for every point, computing the lift
/// and SVD once per dictionary and sharing it across ranks.
fn encode_points(
    points: &[GridPoint],
    train: &[&Record],
    val: &[&Record],
    cfg: &ExperimentConfig,
    exec: Exec,
) -> Vec<Encoded> {
    let mut out: Vec<Option<Encoded>> = points.iter().map(|_| None).collect();
    let records: Vec<&Record> = train.iter().chain(val).copied().collect();
    let labels = |rs: &[&Record]| rs.iter().map(|r| r.label).collect::<Vec<_>>();
    for i in 0..points.len() {
        if out[i].is_some() {
            continue;
        }
        let dict_key = |p: &GridPoint| {
            let k = p.feature_key();
            (k.0, k.1, k.2)
        };
        let members: Vec<usize> = (i..points.len())
            .filter(|&j| dict_key(&points[j]) == dict_key(&points[i]))
            .collect();
        let ranks: Vec<usize> = members.iter().map(|&j| points[j].svd_rank).collect();
        let koopman = points[i].apply(cfg.koopman);
        match koopman_sequences_by_rank(&records, &koopman, cfg.fs, &ranks, exec) {
            Ok(per_rank) => {
                for (j, mut seqs) in members.into_iter().zip(per_rank) {
                    let va_x = seqs.split_off(train.len());
                    out[j] = Some(Ok((
                        SplitData { x: seqs, y: labels(train) },
                        SplitData { x: va_x, y: labels(val) },
                    )));
                }
            }
            Err(e) => {
                for j in members {
                    out[j] = Some(Err(e.to_string()));
                }
            }
        }
    }
    out.into_iter().map(|o| o.expect("every point encoded")).collect()
}

/// Evaluate every grid cell with one seeded run (train on `train`, score on
/// `val`) and pick the winner. Failed cells become NaN rows. A dictionary
/// whose features cannot be computed fails every rank that uses it.
pub fn run_ablation(
    grid: &AblationConfig,
    train: &[&Record],
    val: &[&Record],
    n_classes: usize,
    cfg: &ExperimentConfig,
    exec: Exec,
) -> Result<AblationResult> {
    let points = grid_points(grid);
    let train_cfg = TrainConfig {
        seed: grid.seed,
        max_epochs: grid.max_epochs,
        patience: grid.patience,
        ..cfg.train
    };
    // evaluate each distinct feature configuration once
    let mut unique: Vec<GridPoint> = Vec::new();
    for p in &points {
        if !unique.iter().any(|u| u.feature_key() == p.feature_key()) {
            unique.push(*p);
        }
    }
    let encoded = encode_points(&unique, train, val, cfg, exec);
    let jobs: Vec<(GridPoint, Encoded)> = unique.into_iter().zip(encoded).collect();
    let evaluated = exec::map(exec, &jobs, |(p, data)| eval_point(p, data, n_classes, cfg, &train_cfg));
    let cells: Vec<AblationCell> = points
        .iter()
        .map(|p| {
            let done = evaluated
                .iter()
                .find(|c| c.point.feature_key() == p.feature_key())
                .expect("every point has an evaluated representative");
            AblationCell { point: *p, ..done.clone() }
        })
        .collect();
    let winner = select_winner(&cells).ok_or_else(|| Error::Data("every ablation cell failed".into()))?;
    Ok(AblationResult { cells, winner })
}

/// `delay,rbf_centers,rbf_sigma,svd_rank,val_macro_f1,val_loss,best_epoch,winner,error`
pub fn write_ablation_csv(path: &Path, result: &AblationResult) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "delay,rbf_centers,rbf_sigma,svd_rank,val_macro_f1,val_loss,best_epoch,winner,error")?;
    for (i, c) in result.cells.iter().enumerate() {
        let p = c.point;
        let err = c.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},\"{err}\"",
            p.delay,
            p.rbf_centers,
            p.rbf_sigma,
            p.svd_rank,
            c.val_macro_f1,
            c.val_loss,
            c.best_epoch,
            u8::from(i == result.winner),
        )?;
    }
    f.flush()?;
    Ok(())
}
