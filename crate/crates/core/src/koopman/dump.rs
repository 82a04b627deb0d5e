//! JSON model dump. Floats are written with 17 significant digits.

use std::io::{self, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::dictionary::{Dictionary, DictionaryConfig};
use super::edmd::{KoopmanModel, C64};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ModelDump {
    dict_size: usize,
    k: Vec<Vec<f64>>,
    eigvals_re: Vec<f64>,
    eigvals_im: Vec<f64>,
    eigvecs_re: Vec<Vec<f64>>,
    eigvecs_im: Vec<Vec<f64>>,
    c: Vec<f64>,
    dictionary: DictionaryConfig,
    centers: Vec<Vec<f64>>,
    dt: f64,
    svd_rank: usize,
    ridge_reg: f64,
    rank: usize,
}

/// `serde_json` formatter emitting every float as `{:.16e}`.
struct SigDigits17;

impl serde_json::ser::Formatter for SigDigits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

pub(crate) fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if let Some(r) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            expected: ncols,
            got: r.len(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl KoopmanModel {
    pub fn to_json(&self) -> Result<String> {
        let dump = ModelDump {
            dict_size: self.dict_size(),
            k: rows(&self.k),
            eigvals_re: self.eigvals.iter().map(|e| e.re).collect(),
            eigvals_im: self.eigvals.iter().map(|e| e.im).collect(),
            eigvecs_re: rows(&self.eigvecs.map(|e| e.re)),
            eigvecs_im: rows(&self.eigvecs.map(|e| e.im)),
            c: self.c.iter().copied().collect(),
            dictionary: self.dict.config,
            centers: self.dict.centers.clone(),
            dt: self.dt,
            svd_rank: self.svd_rank,
            ridge_reg: self.ridge_reg,
            rank: self.rank,
        };
        to_json_string(&dump)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: ModelDump = serde_json::from_str(s)?;
        let m = d.dict_size;
        let dict = Dictionary::from_parts(d.dictionary, d.centers)?;
        if dict.size() != m || d.k.len() != m || d.eigvals_re.len() != m || d.eigvals_im.len() != m {
            return Err(Error::DimensionMismatch {
                expected: dict.size(),
                got: m,
            });
        }
        let re = from_rows(&d.eigvecs_re, m)?;
        let im = from_rows(&d.eigvecs_im, m)?;
        Ok(Self {
            k: from_rows(&d.k, m)?,
            eigvals: d.eigvals_re.iter().zip(&d.eigvals_im).map(|(&r, &i)| C64::new(r, i)).collect(),
            eigvecs: DMatrix::from_fn(m, m, |i, j| C64::new(re[(i, j)], im[(i, j)])),
            c: DMatrix::from_row_slice(1, d.c.len(), &d.c),
            dict,
            dt: d.dt,
            svd_rank: d.svd_rank,
            ridge_reg: d.ridge_reg,
            rank: d.rank,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
