//! Periodized orthogonal discrete wavelet transform (Haar, Daubechies-4) and
//! subband summary features.
//!
//! Odd-length inputs at any level are extended by repeating their last sample
//! before filtering; the extension is dropped again on reconstruction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

const HAAR: [f64; 2] = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];

/// Daubechies scaling filter with four vanishing moments (8 taps), solved to
/// full double precision from the orthonormality and moment conditions.
const DB4: [f64; 8] = [
    0.230_377_813_308_896_498_85,
    0.714_846_570_552_915_644_12,
    0.630_880_767_929_858_911_23,
    -0.027_983_769_416_859_849_38,
    -0.187_034_811_719_093_087_12,
    0.030_841_381_835_560_761_244,
    0.032_883_011_666_885_202_956,
    -0.010_597_401_785_069_033_094,
];

/// Floor applied to subband energy before the log.
pub const LOG_ENERGY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletFamily {
    Haar,
    DB4,
}

impl WaveletFamily {
    pub fn scaling(self) -> &'static [f64] {
        match self {
            WaveletFamily::Haar => &HAAR,
            WaveletFamily::DB4 => &DB4,
        }
    }

    /// Quadrature mirror of the scaling filter: `g[k] = (-1)^k h[L-1-k]`.
    pub fn wavelet(self) -> Vec<f64> {
        let h = self.scaling();
        let l = h.len();
        (0..l)
            .map(|k| if k % 2 == 0 { h[l - 1 - k] } else { -h[l - 1 - k] })
            .collect()
    }

    pub fn filter_len(self) -> usize {
        self.scaling().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    pub levels: usize,
}

impl Default for WaveletSpec {
    fn default() -> Self {
        Self {
            family: WaveletFamily::DB4,
            levels: 4,
        }
    }
}

impl WaveletSpec {
    /// Deepest decomposition allowed for a window of `window_len` samples.
    pub fn max_levels(family: WaveletFamily, window_len: usize) -> usize {
        let ratio = window_len as f64 / (family.filter_len() - 1) as f64;
        if ratio < 1.0 {
            0
        } else {
            ratio.log2().floor() as usize
        }
    }

    pub fn feature_len(&self) -> usize {
        4 * (self.levels + 1)
    }

    fn check(&self, window_len: usize) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidParameter("levels must be at least 1".into()));
        }
        let flen = self.family.filter_len();
        if window_len < flen {
            return Err(Error::TooShort {
                needed: flen,
                got: window_len,
            });
        }
        let max = Self::max_levels(self.family, window_len);
        if self.levels > max {
            return Err(Error::InvalidParameter(format!(
                "{} levels requested but a {window_len}-sample window allows {max}",
                self.levels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletDecomposition {
    pub family: WaveletFamily,
    /// Coarsest approximation coefficients.
    pub approx: Vec<f64>,
    /// Detail coefficients, coarsest first and finest last.
    pub details: Vec<Vec<f64>>,
    /// Input length at each level, finest first.
    pub lengths: Vec<usize>,
}

impl WaveletDecomposition {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Subbands coarsest first: approximation, then details.
    pub fn bands(&self) -> impl Iterator<Item = &[f64]> {
        std::iter::once(self.approx.as_slice()).chain(self.details.iter().map(Vec::as_slice))
    }
}

fn analyze(x: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut ext = x.to_vec();
    if ext.len() % 2 == 1 {
        ext.push(*x.last().expect("non-empty"));
    }
    let n = ext.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for i in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for (k, (hk, gk)) in h.iter().zip(g).enumerate() {
            let v = ext[(2 * i + k) % n];
            sa += hk * v;
            sd += gk * v;
        }
        a[i] = sa;
        d[i] = sd;
    }
    (a, d)
}

fn synthesize(a: &[f64], d: &[f64], h: &[f64], g: &[f64], len: usize) -> Vec<f64> {
    let n = 2 * a.len();
    let mut x = vec![0.0; n];
    for i in 0..a.len() {
        for (k, (hk, gk)) in h.iter().zip(g).enumerate() {
            x[(2 * i + k) % n] += hk * a[i] + gk * d[i];
        }
    }
    x.truncate(len);
    x
}

pub fn dwt(window: &[f64], spec: WaveletSpec) -> Result<WaveletDecomposition> {
    spec.check(window.len())?;
    let h = spec.family.scaling();
    let g = spec.family.wavelet();
    let mut current = window.to_vec();
    let mut details = Vec::with_capacity(spec.levels);
    let mut lengths = Vec::with_capacity(spec.levels);
    for _ in 0..spec.levels {
        lengths.push(current.len());
        let (a, d) = analyze(&current, h, &g);
        details.push(d);
        current = a;
    }
    details.reverse();
    Ok(WaveletDecomposition {
        family: spec.family,
        approx: current,
        details,
        lengths,
    })
}

pub fn idwt(decomp: &WaveletDecomposition, spec: WaveletSpec) -> Result<Vec<f64>> {
    if decomp.family != spec.family || decomp.levels() != spec.levels || decomp.lengths.len() != spec.levels {
        return Err(Error::InvalidParameter(format!(
            "decomposition ({:?}, {} levels) does not match spec ({:?}, {} levels)",
            decomp.family,
            decomp.levels(),
            spec.family,
            spec.levels
        )));
    }
    let h = spec.family.scaling();
    let g = spec.family.wavelet();
    let mut current = decomp.approx.clone();
    for (d, &len) in decomp.details.iter().zip(decomp.lengths.iter().rev()) {
        if d.len() != current.len() || len.div_ceil(2) != d.len() {
            return Err(Error::DimensionMismatch {
                expected: len.div_ceil(2),
                got: d.len(),
            });
        }
        current = synthesize(&current, d, h, &g, len);
    }
    Ok(current)
}

/// Per subband, coarsest first: `[ln(max(energy, 1e-12)), mean, std, max |c|]`.
pub fn wavelet_features(decomp: &WaveletDecomposition) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * (decomp.levels() + 1));
    for band in decomp.bands() {
        let n = band.len() as f64;
        let energy: f64 = band.iter().map(|c| c * c).sum();
        let mean = band.iter().sum::<f64>() / n;
        let var = band.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
        let max_abs = band.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        out.extend([energy.max(LOG_ENERGY_FLOOR).ln(), mean, var.sqrt(), max_abs]);
    }
    out
}

/// Decompose and summarize one window.
pub fn window_features(window: &[f64], spec: WaveletSpec) -> Result<Vec<f64>> {
    Ok(wavelet_features(&dwt(window, spec)?))
}
