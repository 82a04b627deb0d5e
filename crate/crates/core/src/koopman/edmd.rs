use std::cmp::Ordering;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dictionary::{build_dictionary, Dictionary, DictionaryConfig};
use super::embed::delay_embed;
use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Singular values below this fraction of the largest are never used.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Fitting knobs besides the dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub svd_rank: usize,
    pub ridge_reg: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            svd_rank: 16,
            ridge_reg: 1e-4,
        }
    }
}

/// A fitted finite-dimensional Koopman approximation.
///
/// `eigvals` holds all M eigenvalues of `k`; the first `rank` come from the
/// retained subspace (sorted by descending magnitude, then descending real
/// part, then non-negative imaginary part first) and the rest are the
/// structural zeros of the truncated fit. `eigvecs` columns follow the same
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub k: DMatrix<f64>,
    pub eigvals: Vec<C64>,
    pub eigvecs: DMatrix<C64>,
    /// 1 x M readout onto the newest delay coordinate.
    pub c: DMatrix<f64>,
    pub dict: Dictionary,
    pub dt: f64,
    pub svd_rank: usize,
    pub ridge_reg: f64,
    /// Effective rank of the fit (≤ svd_rank).
    pub rank: usize,
}

impl KoopmanModel {
    pub fn dict_size(&self) -> usize {
        self.dict.size()
    }

    /// Eigenvalues of the retained subspace.
    pub fn retained_eigvals(&self) -> &[C64] {
        &self.eigvals[..self.rank]
    }

    /// Lift the first snapshot of `window`: Ψ(h_0).
    pub fn lift_initial(&self, window: &[f64]) -> Result<DVector<f64>> {
        let delay = self.dict.config.delay;
        if window.len() < delay {
            return Err(Error::TooShort {
                needed: delay,
                got: window.len(),
            });
        }
        let h0 = DMatrix::from_fn(delay, 1, |i, _| window[delay - 1 - i]);
        Ok(self.dict.lift(&h0)?.column(0).into_owned())
    }

    /// Lift every snapshot of `window`.
    pub fn lift_window(&self, window: &[f64]) -> Result<DMatrix<f64>> {
        self.dict.lift(&delay_embed(window, self.dict.config.delay)?)
    }

    /// ‖Ψ(H') − K Ψ(H)‖_F on `window`.
    pub fn residual(&self, window: &[f64]) -> Result<f64> {
        let psi = self.lift_window(window)?;
        let n = psi.ncols();
        let x = psi.columns(0, n - 1);
        let y = psi.columns(1, n - 1);
        Ok((y - &self.k * x).norm())
    }
}

/// Total order used for eigenvalue ranking.
pub fn eig_order(a: &C64, b: &C64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then((b.im >= 0.0).cmp(&(a.im >= 0.0)))
}

/// Fit an EDMD model to one window.
///
/// The operator solves the ridge least-squares problem
/// `min ‖Ψ(H') − KΨ(H)‖² + ridge‖K‖²` on the leading `svd_rank` singular
/// directions of Ψ(H): with `Ψ(H) ≈ U Σ Vᵀ`, `K = Ψ(H') V S Uᵀ` where
/// `S = diag(σ / (σ² + ridge))`. The readout `C` is solved the same way
/// against the newest delay coordinate.
pub fn edmd_fit(
    window: &[f64],
    fs: f64,
    dict_cfg: DictionaryConfig,
    fit: FitConfig,
) -> Result<KoopmanModel> {
    fit.validate()?;
    LiftedWindow::new(window, fs, dict_cfg)?.fit(fit)
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.svd_rank == 0 {
            return Err(Error::InvalidParameter("svd_rank must be at least 1".into()));
        }
        if !(self.ridge_reg >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ridge_reg must be non-negative, got {}",
                self.ridge_reg
            )));
        }
        Ok(())
    }
}

/// One window's lifted snapshots and their SVD. Fits that differ only in
/// [`FitConfig`] share this work.
#[derive(Debug, Clone)]
pub struct LiftedWindow {
    dict: Dictionary,
    snapshots: DMatrix<f64>,
    psi: DMatrix<f64>,
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
    /// Count of singular values above the rank tolerance.
    numerical: usize,
    dt: f64,
}

/// Truncated operator pieces for one rank.
struct Reduced {
    r: usize,
    /// V_r diag(S), (n-1) x r.
    vs: DMatrix<f64>,
    /// Ψ(H') V_r diag(S), M x r.
    b: DMatrix<f64>,
    /// U_rᵀ b, r x r; shares K's nonzero spectrum.
    small: DMatrix<f64>,
}

impl LiftedWindow {
    pub fn new(window: &[f64], fs: f64, dict_cfg: DictionaryConfig) -> Result<Self> {
        if !(fs > 0.0) {
            return Err(Error::InvalidParameter(format!("fs must be positive, got {fs}")));
        }
        dict_cfg.validate()?;
        let snapshots = delay_embed(window, dict_cfg.delay)?;
        let m = dict_cfg.size();
        let n = snapshots.ncols();
        if n < m + 1 {
            return Err(Error::Underdetermined {
                snapshots: n.saturating_sub(1),
                dict_size: m,
            });
        }
        let dict = build_dictionary(dict_cfg, &snapshots)?;
        let psi = dict.lift(&snapshots)?;
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lifted snapshots".into()));
        }
        let (u, sigma, v) = sorted_svd(psi.columns(0, n - 1).into_owned())?;
        let smax = sigma[0];
        let numerical = sigma.iter().take_while(|&&s| s > RANK_TOLERANCE * smax).count();
        if numerical == 0 {
            return Err(Error::DegenerateInput("lifted snapshots are all zero".into()));
        }
        Ok(Self {
            dict,
            snapshots,
            psi,
            u,
            sigma,
            v,
            numerical,
            dt: 1.0 / fs,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn reduce(&self, fit: FitConfig) -> Reduced {
        let n = self.psi.ncols();
        let r = fit.svd_rank.min(self.numerical);
        let scale = DVector::from_iterator(
            r,
            self.sigma.iter().take(r).map(|s| s / (s * s + fit.ridge_reg)),
        );
        let vs = self.v.columns(0, r) * DMatrix::from_diagonal(&scale);
        let b = self.psi.columns(1, n - 1) * &vs;
        let small = self.u.columns(0, r).transpose() * &b;
        Reduced { r, vs, b, small }
    }

    /// Ranked eigenvalues of the retained subspace, without eigenvectors.
    pub fn retained_eigvals(&self, fit: FitConfig) -> Result<Vec<C64>> {
        fit.validate()?;
        ranked_eigenvalues(&self.reduce(fit).small)
    }

    pub fn fit(&self, fit: FitConfig) -> Result<KoopmanModel> {
        fit.validate()?;
        let Reduced { r, vs, b, small } = self.reduce(fit);
        let m = self.dict.size();
        let n = self.psi.ncols();
        let ur = self.u.columns(0, r);
        let k = &b * ur.transpose();
        let state = self.snapshots.view((0, 0), (1, n - 1));
        let c = (state * &vs) * ur.transpose();

        let (vals, w) = eigen(&small)?;
        let lifted_modes = b.map(|e| C64::new(e, 0.0)) * w;

        let mut eigvals = vals;
        eigvals.extend(std::iter::repeat_n(C64::new(0.0, 0.0), m - r));
        let mut eigvecs = DMatrix::<C64>::zeros(m, m);
        eigvecs.columns_mut(0, r).copy_from(&lifted_modes);
        for (j, col) in self.u.column_iter().skip(r).enumerate() {
            eigvecs.column_mut(r + j).copy_from(&col.map(|e| C64::new(e, 0.0)));
        }

        Ok(KoopmanModel {
            k,
            eigvals,
            eigvecs,
            c,
            dict: self.dict.clone(),
            dt: self.dt,
            svd_rank: fit.svd_rank,
            ridge_reg: fit.ridge_reg,
            rank: r,
        })
    }
}

/// Thin SVD with singular values in descending order. For an M x n input with
/// M ≤ n the returned U is square.
fn sorted_svd(x: DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let svd = x.svd(true, true);
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
        return Err(Error::NonFinite("SVD did not converge".into()));
    };
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let v = DMatrix::from_fn(vt.ncols(), order.len(), |i, j| vt[(order[j], i)]);
    Ok((u, order.iter().map(|&i| s[i]).collect(), v))
}

fn ranked_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    let mut vals: Vec<C64> = a.clone().complex_eigenvalues().iter().copied().collect();
    if vals.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("eigenvalues".into()));
    }
    vals.sort_by(eig_order);
    Ok(vals)
}

/// Eigenvalues (ranked by [`eig_order`]) and matching unit eigenvectors of a
/// small real matrix. Conjugate eigenvalues get conjugate eigenvectors.
fn eigen(a: &DMatrix<f64>) -> Result<(Vec<C64>, DMatrix<C64>)> {
    let n = a.nrows();
    let vals = ranked_eigenvalues(a)?;
    let ac = a.map(|e| C64::new(e, 0.0));
    let norm = a.norm().max(1.0);
    let mut vecs = DMatrix::<C64>::zeros(n, n);
    let mut j = 0;
    while j < n {
        let lambda = vals[j];
        let v = inverse_iteration(&ac, lambda, norm);
        vecs.column_mut(j).copy_from(&v);
        // complex_eigenvalues emits exact conjugate pairs; order puts Im ≥ 0 first
        if lambda.im > 0.0 && j + 1 < n && vals[j + 1] == lambda.conj() {
            vecs.column_mut(j + 1).copy_from(&v.map(|e| e.conj()));
            j += 2;
        } else {
            j += 1;
        }
    }
    Ok((vals, vecs))
}

fn inverse_iteration(a: &DMatrix<C64>, lambda: C64, norm: f64) -> DVector<C64> {
    let n = a.nrows();
    let shift = lambda + C64::new(1e-13 * norm, 1e-13 * norm);
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let lu = shifted.lu();
    // deterministic, generic start vector
    let mut v = DVector::from_fn(n, |i, _| C64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64));
    for _ in 0..3 {
        match lu.solve(&v) {
            Some(next) if next.iter().all(|e| e.re.is_finite() && e.im.is_finite()) => {
                let nrm = next.norm();
                if nrm == 0.0 {
                    break;
                }
                v = next / C64::new(nrm, 0.0);
            }
            _ => break,
        }
    }
    // fix the phase so the largest component is real and positive
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bn), (i, e)| if e.norm() > bn { (i, e.norm()) } else { (bi, bn) });
    let phase = v[imax] / C64::new(v[imax].norm(), 0.0);
    if phase.norm() > 0.0 {
        v /= phase;
    }
    v
}
