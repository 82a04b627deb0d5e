//! Dataset assembly: manifest, per-record preprocessing and labels.

use std::path::Path;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::signal::{self, read_signal_csv, resample, segment, synth_ecg, zscore, DatasetEntry, Signal, SynthClass, WindowSet};

use super::config::ExperimentConfig;
use super::labels::{generate_labels, LabelRule, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub file: String,
    pub diagnosis: String,
    pub label: usize,
    /// Resampled, truncated to `record_sec` and z-scored.
    pub signal: Signal,
    pub windows: WindowSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub class_names: Vec<String>,
    pub records: Vec<Record>,
    /// Manifest rows whose diagnosis matched no label rule.
    pub excluded: usize,
}

impl Dataset {
    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn select(&self, idx: &[usize]) -> Vec<&Record> {
        idx.iter().map(|&i| &self.records[i]).collect()
    }
}

/// Resample to `cfg.fs`, keep the first `record_sec` seconds, z-score and
/// segment.
pub fn preprocess(raw: &Signal, cfg: &ExperimentConfig) -> Result<(Signal, WindowSet)> {
    let s = resample(raw, cfg.fs)?;
    let keep = ((cfg.record_sec * cfg.fs).round() as usize).min(s.len());
    let s = Signal::new(s.samples()[..keep].to_vec(), cfg.fs)?;
    let s = zscore(&s)?;
    let w = segment(&s, cfg.window_sec, cfg.stride_sec)?;
    Ok((s, w))
}

fn labelled(entries: Vec<(String, String, Signal)>, task: Task, cfg: &ExperimentConfig, exec: Exec) -> Result<Dataset> {
    let rule = LabelRule::for_task(task);
    let diagnoses: Vec<&str> = entries.iter().map(|e| e.1.as_str()).collect();
    let (labels, excluded) = generate_labels(&diagnoses, &rule);
    if excluded > 0 {
        log::warn!("{excluded} record(s) matched no {task} label rule and were excluded");
    }
    let kept: Vec<(String, String, Signal, usize)> = entries
        .into_iter()
        .zip(labels)
        .filter_map(|((f, d, s), l)| l.map(|l| (f, d, s, l)))
        .collect();
    let records = exec::map(exec, &kept, |(file, diagnosis, raw, label)| {
        let (signal, windows) = preprocess(raw, cfg).map_err(|e| Error::Data(format!("{file}: {e}")))?;
        Ok(Record {
            file: file.clone(),
            diagnosis: diagnosis.clone(),
            label: *label,
            signal,
            windows,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    if records.is_empty() {
        return Err(Error::Data("no labelled records".into()));
    }
    Ok(Dataset {
        task,
        class_names: rule.class_names,
        records,
        excluded,
    })
}

/// Read `dir/labels.csv` (`file,class`) and every listed `t,value` CSV.
pub fn load_dataset(dir: &Path, task: Task, cfg: &ExperimentConfig, exec: Exec) -> Result<Dataset> {
    let manifest = dir.join("labels.csv");
    let mut rdr = csv::Reader::from_path(&manifest).map_err(|e| Error::Data(format!("{}: {e}", manifest.display())))?;
    let rows: Vec<DatasetEntry> = rdr
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Data(format!("{}: {e}", manifest.display())))?;
    let loaded = exec::map(exec, &rows, |row| {
        let signal = read_signal_csv(dir.join(&row.file))?;
        Ok((row.file.clone(), row.class.clone(), signal))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    labelled(loaded, task, cfg, exec)
}

/// The synthetic dataset described by `cfg.synth`, built in memory with the
/// same file names and seeds [`signal::write_synthetic_dataset`] would use.
pub fn synthetic_dataset(task: Task, cfg: &ExperimentConfig, exec: Exec) -> Result<Dataset> {
    let jobs: Vec<(SynthClass, u64)> = SynthClass::ALL
        .into_iter()
        .flat_map(|c| (0..cfg.synth.per_class as u64).map(move |k| (c, cfg.synth.seed + k)))
        .collect();
    let entries = exec::map(exec, &jobs, |&(class, seed)| {
        let s = synth_ecg(class, cfg.synth.duration_sec, cfg.fs, seed)?;
        Ok((format!("{}_{seed}.csv", class.slug()), class.diagnosis().to_string(), s))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    labelled(entries, task, cfg, exec)
}

/// Write the `cfg.synth` dataset to `dir`.
pub fn write_synthetic(dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<DatasetEntry>> {
    signal::write_synthetic_dataset(dir, cfg.synth.per_class, cfg.synth.duration_sec, cfg.fs, cfg.synth.seed)
}
