use serde::{Deserialize, Serialize};

use super::edmd::{KoopmanModel, C64};
use crate::error::{Error, Result};

/// Eigenvalue magnitudes are floored here before taking the log, so a
/// near-zero mode yields a large negative but finite growth rate.
pub const MIN_GROWTH_MAGNITUDE: f64 = 1e-8;

/// `(re, im, |λ|, ln|λ| / dt)` for the leading `top_k` retained eigenvalues,
/// flattened mode by mode and zero-padded to `4 * top_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoopmanFeatures {
    pub top_k: usize,
    pub values: Vec<f64>,
}

impl KoopmanFeatures {
    pub fn mode(&self, k: usize) -> [f64; 4] {
        let s = &self.values[4 * k..4 * k + 4];
        [s[0], s[1], s[2], s[3]]
    }
}

/// Continuous-time growth rate (1/s) of a discrete eigenvalue magnitude.
pub fn growth_rate(magnitude: f64, dt: f64) -> f64 {
    magnitude.max(MIN_GROWTH_MAGNITUDE).ln() / dt
}

pub fn spectrum_features(model: &KoopmanModel, top_k: usize) -> Result<KoopmanFeatures> {
    eigval_features(model.retained_eigvals(), model.dt, top_k)
}

/// Features from already-ranked retained eigenvalues.
pub fn eigval_features(ranked: &[C64], dt: f64, top_k: usize) -> Result<KoopmanFeatures> {
    if top_k == 0 {
        return Err(Error::InvalidParameter("top_k must be at least 1".into()));
    }
    let mut values = vec![0.0; 4 * top_k];
    for (k, lambda) in ranked.iter().take(top_k).enumerate() {
        let mag = lambda.norm();
        values[4 * k..4 * k + 4].copy_from_slice(&[lambda.re, lambda.im, mag, growth_rate(mag, dt)]);
    }
    Ok(KoopmanFeatures { top_k, values })
}
