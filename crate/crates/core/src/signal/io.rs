//! CSV ingestion (`t,value`) and the synthetic dataset emitter.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{synth_ecg, Signal, SynthClass};
use crate::error::{Error, Result};

/// Relative tolerance on sample spacing before a file is rejected as non-uniform.
const DT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Deserialize)]
struct Row {
    t: f64,
    value: f64,
}

/// Read a `t,value` CSV with header. The sampling rate is the inverse of the
/// median time step; every step must be within 1% of the median.
pub fn read_signal_csv(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "t" || &headers[1] != "value" {
        return Err(Error::Data(format!(
            "{}: expected header `t,value`, found `{}`",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut t = Vec::new();
    let mut x = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        t.push(row.t);
        x.push(row.value);
    }
    if x.len() < 2 {
        return Err(Error::Data(format!(
            "{}: need at least two samples",
            path.display()
        )));
    }
    let mut dts: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted = dts.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(median > 0.0) {
        return Err(Error::Data(format!(
            "{}: time column is not increasing",
            path.display()
        )));
    }
    dts.retain(|dt| ((dt - median) / median).abs() > DT_TOLERANCE);
    if let Some(bad) = dts.first() {
        return Err(Error::Data(format!(
            "{}: non-uniform sampling (step {bad} vs median {median})",
            path.display()
        )));
    }
    Signal::new(x, 1.0 / median)
}

pub fn write_signal_csv(path: impl AsRef<Path>, signal: &Signal) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "value"])?;
    for (i, v) in signal.samples().iter().enumerate() {
        w.write_record([
            format!("{:.17e}", i as f64 / signal.fs()),
            format!("{v:.17e}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A row of `labels.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub file: String,
    pub class: String,
}

/// Write `per_class` records of every class into `dir` as `<class>_<seed>.csv`
/// plus a `labels.csv` manifest. Seeds run `seed0, seed0 + 1, ...` per class.
pub fn write_synthetic_dataset(
    dir: impl AsRef<Path>,
    per_class: usize,
    duration_sec: f64,
    fs: f64,
    seed0: u64,
) -> Result<Vec<DatasetEntry>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(per_class * SynthClass::ALL.len());
    for class in SynthClass::ALL {
        for k in 0..per_class as u64 {
            let seed = seed0 + k;
            let file = format!("{}_{seed}.csv", class.slug());
            let signal = synth_ecg(class, duration_sec, fs, seed)?;
            write_signal_csv(dir.join(&file), &signal)?;
            entries.push(DatasetEntry {
                file,
                class: class.diagnosis().to_string(),
            });
        }
    }
    let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
    for e in &entries {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn csv_round_trip_and_rate_inference() {
        let dir = tempfile::tempdir().unwrap();
        let s = synth_ecg(SynthClass::Normal, 4.0, 125.0, 3).unwrap();
        let p = dir.path().join("a.csv");
        write_signal_csv(&p, &s).unwrap();
        let r = read_signal_csv(&p).unwrap();
        assert!((r.fs() - 125.0).abs() < 1e-9);
        assert_eq!(r.samples(), s.samples());
    }

    #[test]
    fn rejects_non_uniform_and_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let mut f = fs::File::create(&p).unwrap();
        writeln!(f, "t,value\n0,1\n0.01,2\n0.02,3\n0.035,4\n0.045,5").unwrap();
        assert!(matches!(read_signal_csv(&p), Err(Error::Data(_))));

        let q = dir.path().join("c.csv");
        fs::write(&q, "time,v\n0,1\n1,2\n").unwrap();
        assert!(matches!(read_signal_csv(&q), Err(Error::Data(_))));
    }

    #[test]
    fn emits_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let entries = write_synthetic_dataset(dir.path(), 2, 4.0, 125.0, 10).unwrap();
        assert_eq!(entries.len(), 8);
        assert_eq!(entries[0].file, "normal_10.csv");
        let manifest = fs::read_to_string(dir.path().join("labels.csv")).unwrap();
        assert!(manifest.starts_with("file,class\n"));
        assert!(manifest.contains("afib_11.csv,Atrial fibrillation"));
        assert!(dir.path().join("block_11.csv").exists());
    }
}
