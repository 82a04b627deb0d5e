use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::edmd::{KoopmanModel, C64};
use crate::error::{Error, Result};
use crate::signal::mean_std;

/// Eigenbases with a condition number above this are treated as defective.
pub const MAX_EIGENBASIS_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub samples: Vec<f64>,
    /// Set when the eigenbasis was ill-conditioned and `C Kᵗ Ψ(h_0)` was
    /// evaluated by repeated multiplication instead.
    pub used_fallback: bool,
}

/// Absolute modal amplitudes, one row per retained mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAmplitudes {
    pub rows: Vec<Vec<f64>>,
}

impl ModeAmplitudes {
    pub fn modes(&self) -> usize {
        self.rows.len()
    }

    pub fn steps(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn max(&self) -> f64 {
        self.rows.iter().flatten().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionError {
    pub rmse: f64,
    pub nrmse: f64,
    pub max_abs: f64,
}

/// Eigen-coordinates of a lifted state: solves `V b = ψ`.
struct Modal {
    b: Vec<C64>,
    /// `C v_k` for every mode.
    readout: Vec<C64>,
}

fn modal(model: &KoopmanModel, psi0: &DVector<f64>) -> Option<Modal> {
    let v = &model.eigvecs;
    let sv = v.clone().singular_values();
    let (smax, smin) = sv.iter().fold((0.0f64, f64::MAX), |(a, b), &s| (a.max(s), b.min(s)));
    if !(smin > 0.0) || smax / smin > MAX_EIGENBASIS_CONDITION {
        return None;
    }
    let rhs = psi0.map(|e| C64::new(e, 0.0));
    let b = v.clone().lu().solve(&rhs)?;
    let cc = model.c.map(|e| C64::new(e, 0.0));
    let readout = (cc * v).iter().copied().collect();
    Some(Modal {
        b: b.iter().copied().collect(),
        readout,
    })
}

/// `C Kᵗ Ψ(h_0)` for `t = 0..steps`, via the eigendecomposition when it is
/// well conditioned.
///
/// Output `t` estimates the newest delay coordinate of snapshot `t`, i.e.
/// `window[delay - 1 + t]`.
pub fn reconstruct(model: &KoopmanModel, window: &[f64], steps: usize) -> Result<Reconstruction> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    let psi0 = model.lift_initial(window)?;
    if let Some(m) = modal(model, &psi0) {
        let samples = (0..steps)
            .map(|t| {
                m.readout
                    .iter()
                    .zip(&m.b)
                    .zip(&model.eigvals)
                    .map(|((r, b), l)| r * b * l.powu(t as u32))
                    .sum::<C64>()
                    .re
            })
            .collect();
        return Ok(Reconstruction {
            samples,
            used_fallback: false,
        });
    }
    let mut state = psi0;
    let mut samples = Vec::with_capacity(steps);
    for _ in 0..steps {
        samples.push((&model.c * &state)[(0, 0)]);
        state = &model.k * state;
    }
    Ok(Reconstruction {
        samples,
        used_fallback: true,
    })
}

/// Re-anchored prediction along the observed trajectory of `window`.
///
/// Output `j` (aligned with `window[delay - 1 + j]`) is `C Kᵐ Ψ(h_{j-m})`
/// with `m = ((j - 1) mod horizon) + 1`: the model is restarted from the
/// observed state every `horizon` steps. `horizon = 1` is one-step-ahead
/// prediction; a horizon at least the snapshot count is a free run from
/// `h_0`. Output 0 is the readout of `h_0` itself.
pub fn predict_anchored(model: &KoopmanModel, window: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let psi = model.lift_window(window)?;
    let n = psi.ncols();
    let mut out = Vec::with_capacity(n);
    out.push((&model.c * psi.column(0))[(0, 0)]);
    let mut state: DVector<f64> = psi.column(0).into_owned();
    for j in 1..n {
        if (j - 1) % horizon == 0 {
            state = psi.column(j - 1).into_owned();
        }
        state = &model.k * state;
        out.push((&model.c * &state)[(0, 0)]);
    }
    Ok(out)
}

/// Samples of `window` that [`reconstruct`] and [`predict_anchored`] estimate.
pub fn reconstruction_target(model: &KoopmanModel, window: &[f64]) -> Vec<f64> {
    window[model.dict.config.delay - 1..].to_vec()
}

/// Per-mode signed contributions `(C v_k) b_k λ_kᵗ`; summing the real parts
/// over `k` gives [`reconstruct`]'s output.
pub fn modal_contributions(model: &KoopmanModel, window: &[f64], steps: usize) -> Result<DMatrix<C64>> {
    let psi0 = model.lift_initial(window)?;
    let m = modal(model, &psi0).ok_or_else(|| {
        Error::DegenerateInput("eigenbasis is defective (condition number above 1e12)".into())
    })?;
    Ok(DMatrix::from_fn(model.eigvals.len(), steps, |k, t| {
        m.readout[k] * m.b[k] * model.eigvals[k].powu(t as u32)
    }))
}

/// `A[k][t] = |b_k λ_kᵗ| · |C v_k|` over the retained modes, rows in
/// eigenvalue order.
pub fn mode_amplitudes(model: &KoopmanModel, window: &[f64], steps: usize) -> Result<ModeAmplitudes> {
    let contrib = modal_contributions(model, window, steps)?;
    let rows = (0..model.rank)
        .map(|k| contrib.row(k).iter().map(|c| c.norm()).collect())
        .collect();
    Ok(ModeAmplitudes { rows })
}

pub fn reconstruction_error(original: &[f64], reconstructed: &[f64]) -> Result<ReconstructionError> {
    if original.len() != reconstructed.len() {
        return Err(Error::DimensionMismatch {
            expected: original.len(),
            got: reconstructed.len(),
        });
    }
    if original.is_empty() {
        return Err(Error::DegenerateInput("empty signals".into()));
    }
    let n = original.len() as f64;
    let (sq, max_abs) = original
        .iter()
        .zip(reconstructed)
        .fold((0.0, 0.0f64), |(sq, mx), (a, b)| {
            let d = a - b;
            (sq + d * d, mx.max(d.abs()))
        });
    let rmse = (sq / n).sqrt();
    let (_, std) = mean_std(original);
    if !(std > 0.0) {
        return Err(Error::DegenerateInput("original has zero variance".into()));
    }
    Ok(ReconstructionError {
        rmse,
        nrmse: rmse / std,
        max_abs,
    })
}
