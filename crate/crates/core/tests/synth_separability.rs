//! The four synthetic rhythm classes are separable by a two-feature threshold
//! rule, measured here with an independent R-peak detector.

use koopman_ecg::signal::{synth_ecg, SynthClass};

const FS: f64 = 125.0;

/// Interior local maxima above 0.5 at least 0.2 s apart.
fn r_peaks(x: &[f64]) -> Vec<usize> {
    let refractory = (0.2 * FS) as usize;
    let mut peaks: Vec<usize> = Vec::new();
    for i in 1..x.len() - 1 {
        if x[i] > 0.5 && x[i] >= x[i - 1] && x[i] > x[i + 1] {
            match peaks.last() {
                Some(&p) if i - p < refractory => {
                    if x[i] > x[p] {
                        *peaks.last_mut().unwrap() = i;
                    }
                }
                _ => peaks.push(i),
            }
        }
    }
    peaks
}

/// Full width at half maximum of the beat at `p`, in seconds.
fn half_width(x: &[f64], p: usize) -> f64 {
    let half = x[p] / 2.0;
    let mut lo = p;
    while lo > 0 && x[lo - 1] > half {
        lo -= 1;
    }
    let mut hi = p;
    while hi + 1 < x.len() && x[hi + 1] > half {
        hi += 1;
    }
    (hi - lo + 1) as f64 / FS
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// (RR coefficient of variation, median QRS width in seconds).
fn rhythm_features(x: &[f64]) -> (f64, f64) {
    let peaks = r_peaks(x);
    let rr: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64 / FS).collect();
    let n = rr.len() as f64;
    let mean = rr.iter().sum::<f64>() / n;
    let sd = (rr.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
    let width = median(peaks.iter().map(|&p| half_width(x, p)).collect());
    (sd / mean, width)
}

fn classify(cv: f64, width: f64) -> SynthClass {
    if width > 0.08 {
        SynthClass::Ventricular
    } else if cv < 0.08 {
        SynthClass::Normal
    } else if cv < 0.28 {
        SynthClass::AFib
    } else {
        SynthClass::Block
    }
}

#[test]
fn threshold_rule_separates_classes() {
    let mut correct = 0;
    let mut total = 0;
    let mut misses = Vec::new();
    for class in SynthClass::ALL {
        for seed in 0..100 {
            let s = synth_ecg(class, 10.0, FS, seed).unwrap();
            let (cv, width) = rhythm_features(s.samples());
            let got = classify(cv, width);
            total += 1;
            if got == class {
                correct += 1;
            } else {
                misses.push((class, seed, cv, width, got));
            }
        }
    }
    let acc = correct as f64 / total as f64;
    assert!(acc >= 0.95, "accuracy {acc}: {misses:?}");
    // per class as well, so one class cannot hide behind the others
    for class in SynthClass::ALL {
        let m = misses.iter().filter(|m| m.0 == class).count();
        assert!(m <= 5, "{class:?}: {m} misses {misses:?}");
    }
}
