//! Extended dynamic mode decomposition: delay embedding, dictionary lifting,
//! truncated ridge operator fit, spectral features and reconstruction.

mod dictionary;
mod dump;
mod edmd;
mod embed;
mod reconstruct;
mod spectrum;

pub use dictionary::{build_dictionary, Dictionary, DictionaryConfig};
pub use edmd::{edmd_fit, eig_order, FitConfig, KoopmanModel, LiftedWindow, C64, RANK_TOLERANCE};
pub use embed::delay_embed;
pub use reconstruct::{
    modal_contributions, mode_amplitudes, predict_anchored, reconstruct, reconstruction_error,
    reconstruction_target, ModeAmplitudes, Reconstruction, ReconstructionError,
    MAX_EIGENBASIS_CONDITION,
};
pub use spectrum::{eigval_features, growth_rate, spectrum_features, KoopmanFeatures, MIN_GROWTH_MAGNITUDE};

use crate::error::Result;

/// Everything needed to turn one window into a Koopman feature vector.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct KoopmanConfig {
    pub dictionary: DictionaryConfig,
    pub fit: FitConfig,
    pub top_k: usize,
}

impl Default for KoopmanConfig {
    fn default() -> Self {
        Self {
            dictionary: DictionaryConfig::default(),
            fit: FitConfig::default(),
            top_k: 8,
        }
    }
}

impl KoopmanConfig {
    pub fn feature_len(&self) -> usize {
        4 * self.top_k
    }
}

/// Fit one window and return its spectrum feature vector.
pub fn window_features(window: &[f64], fs: f64, cfg: &KoopmanConfig) -> Result<Vec<f64>> {
    Ok(window_features_by_rank(window, fs, cfg, &[cfg.fit.svd_rank])?.remove(0))
}

/// Feature vectors of one window for each of `ranks`, sharing the lift and
/// SVD. Any other field of `cfg.fit` applies to every rank.
pub fn window_features_by_rank(window: &[f64], fs: f64, cfg: &KoopmanConfig, ranks: &[usize]) -> Result<Vec<Vec<f64>>> {
    let lifted = LiftedWindow::new(window, fs, cfg.dictionary)?;
    ranks
        .iter()
        .map(|&svd_rank| {
            let vals = lifted.retained_eigvals(FitConfig { svd_rank, ..cfg.fit })?;
            Ok(eigval_features(&vals, lifted.dt(), cfg.top_k)?.values)
        })
        .collect()
}
