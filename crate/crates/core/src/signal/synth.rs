//! Sum-of-Gaussians ECG surrogate with four rhythm classes.
//!
//! Each beat is a set of Gaussian bumps placed relative to the R peak. The
//! rhythm classes differ in beat timing and morphology:
//!
//! * Normal: 60-90 bpm, 2% RR jitter, full P-QRS-T.
//! * AFib: 90-140 bpm mean, RR coefficient of variation 0.18-0.24, no P wave,
//!   low-amplitude 5-7 Hz fibrillatory baseline.
//! * Ventricular: 130-170 bpm, QRS 2.5x wider than normal, no P wave, broad
//!   inverted T.
//! * Block: 70-90 bpm atrial rate, PR interval 0.32 s (normal 0.16 s), every
//!   3rd or 4th P wave not conducted.
//!
//! The output is noise free.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Signal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SynthClass {
    Normal,
    AFib,
    Ventricular,
    Block,
}

impl SynthClass {
    pub const ALL: [SynthClass; 4] = [
        SynthClass::Normal,
        SynthClass::AFib,
        SynthClass::Ventricular,
        SynthClass::Block,
    ];

    /// Short name used in file names.
    pub fn slug(self) -> &'static str {
        match self {
            SynthClass::Normal => "normal",
            SynthClass::AFib => "afib",
            SynthClass::Ventricular => "ventricular",
            SynthClass::Block => "block",
        }
    }

    /// Diagnosis text written to dataset manifests.
    pub fn diagnosis(self) -> &'static str {
        match self {
            SynthClass::Normal => "Normal sinus rhythm",
            SynthClass::AFib => "Atrial fibrillation",
            SynthClass::Ventricular => "Ventricular tachycardia",
            SynthClass::Block => "Second degree AV block",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.slug().eq_ignore_ascii_case(s))
    }

    fn salt(self) -> u64 {
        match self {
            SynthClass::Normal => 0x9e37_79b9_7f4a_7c15,
            SynthClass::AFib => 0xbf58_476d_1ce4_e5b9,
            SynthClass::Ventricular => 0x94d0_49bb_1331_11eb,
            SynthClass::Block => 0xd6e8_feb8_6659_fd93,
        }
    }
}

/// One Gaussian bump: offset from the R peak (s), amplitude, width sigma (s).
#[derive(Debug, Clone, Copy)]
struct Wave {
    offset: f64,
    amp: f64,
    sigma: f64,
}

const fn wave(offset: f64, amp: f64, sigma: f64) -> Wave {
    Wave { offset, amp, sigma }
}

/// Normal QRS sigma; the Ventricular class scales this.
const QRS_SIGMA: f64 = 0.020;
const P_WAVE: Wave = wave(-0.16, 0.12, 0.025);
const Q_WAVE: Wave = wave(-0.03, -0.10, 0.8 * QRS_SIGMA);
const R_WAVE: Wave = wave(0.0, 1.0, QRS_SIGMA);
const S_WAVE: Wave = wave(0.035, -0.20, QRS_SIGMA);
const T_WAVE: Wave = wave(0.26, 0.30, 0.045);
const AFIB_T_WAVE: Wave = wave(0.24, 0.25, 0.045);

const VENTRICULAR_WIDENING: f64 = 2.5;
const V_R_WAVE: Wave = wave(0.0, 1.0, VENTRICULAR_WIDENING * QRS_SIGMA);
const V_T_WAVE: Wave = wave(0.20, -0.40, 0.060);

/// PR interval of a conducted Block beat (normal is `-P_WAVE.offset`).
const BLOCK_PR: f64 = 0.32;

const RR_JITTER: f64 = 0.02;
const AFIB_MIN_RR: f64 = 0.30;
const FWAVE_AMPS: [f64; 2] = [0.03, 0.02];

struct Canvas {
    fs: f64,
    x: Vec<f64>,
}

impl Canvas {
    fn add(&mut self, center: f64, w: Wave) {
        let c = center + w.offset;
        // ±6 sigma support; contributions beyond are below 1.6e-8 of amplitude
        let lo = ((c - 6.0 * w.sigma) * self.fs).floor().max(0.0) as usize;
        let hi = (((c + 6.0 * w.sigma) * self.fs).ceil().max(0.0) as usize).min(self.x.len());
        let k = 1.0 / (2.0 * w.sigma * w.sigma);
        for (i, v) in self.x.iter_mut().enumerate().take(hi).skip(lo) {
            let d = i as f64 / self.fs - c;
            *v += w.amp * (-d * d * k).exp();
        }
    }

    fn add_all(&mut self, center: f64, waves: &[Wave]) {
        for &w in waves {
            self.add(center, w);
        }
    }
}

/// Generate `duration_sec` seconds of class-`class` rhythm at `fs`.
/// Deterministic in `(class, duration_sec, fs, seed)`.
pub fn synth_ecg(class: SynthClass, duration_sec: f64, fs: f64, seed: u64) -> Result<Signal> {
    if !(duration_sec >= 4.0) {
        return Err(Error::InvalidParameter(format!(
            "duration must be at least 4 s, got {duration_sec}"
        )));
    }
    if !(fs >= 50.0) {
        return Err(Error::InvalidParameter(format!(
            "sampling rate must be at least 50 Hz, got {fs}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ class.salt());
    let n = (duration_sec * fs).round() as usize;
    let mut canvas = Canvas {
        fs,
        x: vec![0.0; n],
    };
    // beats are laid out from slightly before t = 0 to slightly past the end
    let end = duration_sec + 1.0;

    match class {
        SynthClass::Normal => {
            let rr = 60.0 / rng.random_range(60.0..90.0);
            let mut t = rng.random_range(0.0..rr) - rr;
            while t < end {
                canvas.add_all(t, &[P_WAVE, Q_WAVE, R_WAVE, S_WAVE, T_WAVE]);
                t += jittered(&mut rng, rr);
            }
        }
        SynthClass::AFib => {
            let rr: f64 = 60.0 / rng.random_range(90.0..140.0);
            let cv: f64 = rng.random_range(0.18..0.24);
            let count = (end / (rr * (1.0 - 2.0 * cv)).max(AFIB_MIN_RR)).ceil() as usize + 4;
            let mut dev: Vec<f64> = (0..count).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (m, s) = super::mean_std(&dev);
            for d in &mut dev {
                *d = (*d - m) / s * cv;
            }
            let mut t = rng.random_range(0.0..rr) - rr;
            for d in dev {
                if t >= end {
                    break;
                }
                canvas.add_all(t, &[Q_WAVE, R_WAVE, S_WAVE, AFIB_T_WAVE]);
                t += (rr * (1.0 + d)).max(AFIB_MIN_RR);
            }
            for amp in FWAVE_AMPS {
                let f = rng.random_range(5.0..7.0);
                let phase = rng.random_range(0.0..2.0 * PI);
                for (i, v) in canvas.x.iter_mut().enumerate() {
                    *v += amp * (2.0 * PI * f * i as f64 / fs + phase).sin();
                }
            }
        }
        SynthClass::Ventricular => {
            let rr = 60.0 / rng.random_range(130.0..170.0);
            let mut t = rng.random_range(0.0..rr) - rr;
            while t < end {
                canvas.add_all(t, &[V_R_WAVE, V_T_WAVE]);
                t += jittered(&mut rng, rr);
            }
        }
        SynthClass::Block => {
            let pp = 60.0 / rng.random_range(70.0..90.0);
            let period: usize = rng.random_range(3..=4);
            let mut p = rng.random_range(0.0..pp) - pp;
            let mut i = 0usize;
            while p < end {
                canvas.add(p, wave(0.0, P_WAVE.amp, P_WAVE.sigma));
                if i % period != period - 1 {
                    canvas.add_all(p + BLOCK_PR, &[Q_WAVE, R_WAVE, S_WAVE, T_WAVE]);
                }
                p += jittered(&mut rng, pp);
                i += 1;
            }
        }
    }
    Signal::new(canvas.x, fs)
}

fn jittered(rng: &mut ChaCha8Rng, interval: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    interval * (1.0 + RR_JITTER * z.clamp(-3.0, 3.0))
}
