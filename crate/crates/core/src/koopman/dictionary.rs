use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observable dictionary: a constant, every monomial of the delay vector up to
/// `poly_deg`, and `rbf_centers` Gaussian radial basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DictionaryConfig {
    pub delay: usize,
    pub poly_deg: usize,
    pub rbf_centers: usize,
    pub rbf_sigma: f64,
    pub center_seed: u64,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        Self {
            delay: 8,
            poly_deg: 2,
            rbf_centers: 0,
            rbf_sigma: 0.3,
            center_seed: 42,
        }
    }
}

impl DictionaryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delay == 0 {
            return Err(Error::InvalidParameter("delay must be at least 1".into()));
        }
        if self.poly_deg == 0 {
            return Err(Error::InvalidParameter("poly_deg must be at least 1".into()));
        }
        if self.rbf_centers > 0 && !(self.rbf_sigma > 0.0 && self.rbf_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rbf_sigma must be positive, got {}",
                self.rbf_sigma
            )));
        }
        Ok(())
    }

    /// Number of non-constant monomials: C(delay + poly_deg, poly_deg) - 1.
    pub fn monomial_count(&self) -> usize {
        let (n, k) = (self.delay + self.poly_deg, self.poly_deg);
        let mut c = 1usize;
        for i in 0..k {
            c = c * (n - i) / (i + 1);
        }
        c - 1
    }

    /// Total dictionary size M.
    pub fn size(&self) -> usize {
        1 + self.monomial_count() + self.rbf_centers
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub config: DictionaryConfig,
    /// RBF centers, each of length `config.delay`.
    pub centers: Vec<Vec<f64>>,
    /// Variable indices of each monomial, graded-lexicographic order.
    #[serde(skip)]
    monomials: Vec<Vec<usize>>,
}

fn monomials(delay: usize, poly_deg: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for degree in 1..=poly_deg {
        // non-decreasing index tuples of length `degree`
        let mut idx = vec![0usize; degree];
        loop {
            out.push(idx.clone());
            let Some(pos) = (0..degree).rev().find(|&p| idx[p] + 1 < delay) else {
                break;
            };
            let next = idx[pos] + 1;
            for v in &mut idx[pos..] {
                *v = next;
            }
        }
    }
    out
}

impl Dictionary {
    pub fn from_parts(config: DictionaryConfig, centers: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        if centers.len() != config.rbf_centers {
            return Err(Error::DimensionMismatch {
                expected: config.rbf_centers,
                got: centers.len(),
            });
        }
        if let Some(c) = centers.iter().find(|c| c.len() != config.delay) {
            return Err(Error::DimensionMismatch {
                expected: config.delay,
                got: c.len(),
            });
        }
        Ok(Self {
            monomials: monomials(config.delay, config.poly_deg),
            config,
            centers,
        })
    }

    pub fn size(&self) -> usize {
        self.config.size()
    }

    /// Evaluate every observable on every snapshot column: an M x n matrix.
    pub fn lift(&self, snapshots: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if snapshots.nrows() != self.config.delay {
            return Err(Error::DimensionMismatch {
                expected: self.config.delay,
                got: snapshots.nrows(),
            });
        }
        let m = self.size();
        let n = snapshots.ncols();
        let mut psi = DMatrix::zeros(m, n);
        let inv_two_var = 1.0 / (2.0 * self.config.rbf_sigma * self.config.rbf_sigma);
        let rbf0 = 1 + self.monomials.len();
        for j in 0..n {
            let z = snapshots.column(j);
            psi[(0, j)] = 1.0;
            for (r, mono) in self.monomials.iter().enumerate() {
                psi[(1 + r, j)] = mono.iter().map(|&i| z[i]).product();
            }
            for (r, c) in self.centers.iter().enumerate() {
                let d2: f64 = z.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                psi[(rbf0 + r, j)] = (-d2 * inv_two_var).exp();
            }
        }
        Ok(psi)
    }
}

/// Pick RBF centers as distinct snapshot columns, uniformly without
/// replacement, seeded by `config.center_seed`.
pub fn build_dictionary(config: DictionaryConfig, snapshots: &DMatrix<f64>) -> Result<Dictionary> {
    config.validate()?;
    if snapshots.nrows() != config.delay {
        return Err(Error::DimensionMismatch {
            expected: config.delay,
            got: snapshots.nrows(),
        });
    }
    let available = snapshots.ncols();
    if available < config.rbf_centers.max(1) {
        return Err(Error::InvalidParameter(format!(
            "{} RBF centers requested from {available} snapshots",
            config.rbf_centers
        )));
    }
    let centers = if config.rbf_centers == 0 {
        Vec::new()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.center_seed);
        rand::seq::index::sample(&mut rng, available, config.rbf_centers)
            .into_iter()
            .map(|j| snapshots.column(j).iter().copied().collect())
            .collect()
    };
    Dictionary::from_parts(config, centers)
}
