//! Uniformly sampled single-lead signals and the preprocessing chain:
//! resampling, z-scoring and overlapping segmentation.

mod io;
mod synth;

pub use io::{read_signal_csv, write_signal_csv, write_synthetic_dataset, DatasetEntry};
pub use synth::{synth_ecg, SynthClass};

use crate::error::{Error, Result};

/// A uniformly sampled 1-D waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    fs: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::DegenerateInput("empty signal".into()));
        }
        Ok(Self { samples, fs })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// Fixed-length windows cut from a signal at a constant stride.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<Vec<f64>>,
    pub window_len: usize,
    pub stride: usize,
    pub source_fs: f64,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Start offset (in samples) of window `i` within the source signal.
    pub fn offset(&self, i: usize) -> usize {
        i * self.stride
    }
}

/// Linear-interpolation resample onto a grid at `target_fs`.
///
/// Output sample `i` sits at time `i / target_fs`; points past the last input
/// sample hold its value.
pub fn resample(signal: &Signal, target_fs: f64) -> Result<Signal> {
    if !(target_fs > 0.0 && target_fs.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target sampling rate must be positive, got {target_fs}"
        )));
    }
    let x = signal.samples();
    if target_fs == signal.fs {
        return Ok(signal.clone());
    }
    let n_out = ((x.len() as f64) * target_fs / signal.fs).round().max(1.0) as usize;
    let ratio = signal.fs / target_fs;
    let last = x.len() - 1;
    let out = (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = pos.floor() as usize;
            if lo >= last {
                return x[last];
            }
            let frac = pos - lo as f64;
            x[lo] + frac * (x[lo + 1] - x[lo])
        })
        .collect();
    Signal::new(out, target_fs)
}

/// Mean and population standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Standardize to zero mean and unit population standard deviation.
pub fn zscore(signal: &Signal) -> Result<Signal> {
    let x = signal.samples();
    if x.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    let (mean, std) = mean_std(x);
    if !(std > 1e-14 * (1.0 + mean.abs())) {
        return Err(Error::DegenerateInput(format!(
            "zero variance signal (std = {std:e})"
        )));
    }
    let mut out: Vec<f64> = x.iter().map(|v| (v - mean) / std).collect();
    // one refinement pass removes the rounding left by the first division
    let (m2, s2) = mean_std(&out);
    for v in &mut out {
        *v = (*v - m2) / s2;
    }
    Signal::new(out, signal.fs)
}

/// Cut `signal` into windows of `window_sec` seconds every `stride_sec` seconds.
/// A trailing partial window is dropped.
pub fn segment(signal: &Signal, window_sec: f64, stride_sec: f64) -> Result<WindowSet> {
    let fs = signal.fs();
    let window_len = (window_sec * fs).round();
    let stride = (stride_sec * fs).round();
    if !(window_len >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "window of {window_sec} s at {fs} Hz is shorter than 2 samples"
        )));
    }
    if !(stride >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "stride of {stride_sec} s at {fs} Hz is shorter than 1 sample"
        )));
    }
    let (window_len, stride) = (window_len as usize, stride as usize);
    let n = signal.len();
    if n < window_len {
        return Err(Error::TooShort {
            needed: window_len,
            got: n,
        });
    }
    let count = (n - window_len) / stride + 1;
    let windows = (0..count)
        .map(|i| signal.samples()[i * stride..i * stride + window_len].to_vec())
        .collect();
    Ok(WindowSet {
        windows,
        window_len,
        stride,
        source_fs: fs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(x: &[f64], fs: f64) -> Signal {
        Signal::new(x.to_vec(), fs).unwrap()
    }

    #[test]
    fn rejects_bad_signals() {
        assert!(Signal::new(vec![], 10.0).is_err());
        assert!(Signal::new(vec![1.0], 0.0).is_err());
        assert!(Signal::new(vec![1.0], -1.0).is_err());
    }

    #[test]
    fn resample_identity_and_constant() {
        let s = sig(&[0.3, -1.0, 2.5, 7.0], 100.0);
        assert_eq!(resample(&s, 100.0).unwrap(), s);

        let c = sig(&[4.2; 37], 100.0);
        let r = resample(&c, 33.0).unwrap();
        assert_eq!(r.len(), (37.0f64 * 33.0 / 100.0).round() as usize);
        assert!(r.samples().iter().all(|&v| v == 4.2));
        assert!(resample(&c, 0.0).is_err());
    }

    #[test]
    fn resample_sine_500_to_125() {
        let fs = 500.0;
        let x: Vec<f64> = (0..5000)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / fs).sin())
            .collect();
        let r = resample(&sig(&x, fs), 125.0).unwrap();
        assert_eq!(r.len(), 1250);
        let dev = r
            .samples()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (2.0 * std::f64::consts::PI * i as f64 / 125.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-3, "{dev}");
    }

    #[test]
    fn zscore_examples() {
        let z = zscore(&sig(&[1.0, 2.0, 3.0], 1.0)).unwrap();
        let e = 1.224_744_871_391_589;
        for (a, b) in z.samples().iter().zip([-e, 0.0, e]) {
            assert!((a - b).abs() < 1e-12);
        }
        let again = zscore(&z).unwrap();
        for (a, b) in again.samples().iter().zip(z.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            zscore(&sig(&[5.0, 5.0, 5.0], 1.0)),
            Err(Error::DegenerateInput(_))
        ));
        assert!(zscore(&sig(&[1.0], 1.0)).is_err());
    }

    #[test]
    fn segment_examples() {
        let s = sig(&vec![0.0; 1250], 125.0);
        let w = segment(&s, 2.0, 1.0).unwrap();
        assert_eq!(w.len(), 9);
        assert!(w.windows.iter().all(|w| w.len() == 250));

        assert_eq!(segment(&sig(&vec![0.0; 250], 125.0), 2.0, 1.0).unwrap().len(), 1);
        assert!(matches!(
            segment(&sig(&vec![0.0; 249], 125.0), 2.0, 1.0),
            Err(Error::TooShort { .. })
        ));
        assert!(segment(&s, 0.001, 1.0).is_err());
        assert!(segment(&s, 2.0, 0.001).is_err());
    }

    proptest! {
        #[test]
        fn segment_count_formula(n in 2usize..600, w in 2usize..80, s in 1usize..40) {
            prop_assume!(n >= w);
            let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let ws = segment(&sig(&x, 1.0), w as f64, s as f64).unwrap();
            prop_assert_eq!(ws.len(), (n - w) / s + 1);
            for (i, win) in ws.windows.iter().enumerate() {
                prop_assert_eq!(win.len(), w);
                prop_assert_eq!(win[0] as usize, ws.offset(i));
            }
        }

        #[test]
        fn zscore_moments(x in proptest::collection::vec(-1e3f64..1e3, 2..300)) {
            let (_, std) = mean_std(&x);
            prop_assume!(std > 1e-6);
            let z = zscore(&sig(&x, 1.0)).unwrap();
            let (m, s) = mean_std(z.samples());
            prop_assert!(m.abs() < 1e-12);
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn resample_exact_on_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, n in 4usize..200,
                                    target in 1.0f64..400.0) {
            let fs = 100.0;
            let x: Vec<f64> = (0..n).map(|i| a + b * i as f64 / fs).collect();
            let r = resample(&sig(&x, fs), target).unwrap();
            let t_end = (n - 1) as f64 / fs;
            for (i, v) in r.samples().iter().enumerate() {
                let t = (i as f64 / target).min(t_end);
                prop_assert!((v - (a + b * t)).abs() < 1e-9);
            }
        }
    }
}
