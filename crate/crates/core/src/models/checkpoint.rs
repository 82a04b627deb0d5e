//! Checkpoints: a JSON manifest next to a flat little-endian f64 blob.
//!
//! The manifest records the model kind and config, a name -> (offset, shape)
//! table into the blob, and free-form metadata for the caller.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::params::Params;
use super::rnn::{RnnConfig, RnnModel};
use super::tensor::Mat;
use super::transformer::{TransformerConfig, TransformerModel};
use super::ClassifierModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "lowercase")]
pub enum ModelSpec {
    Transformer(TransformerConfig),
    Rnn(RnnConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    /// Offset in f64 elements, not bytes.
    pub offset: usize,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub spec: ModelSpec,
    pub binary: String,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Write `path` (manifest) and the sibling `.bin` blob.
pub fn save(model: &ClassifierModel, metadata: BTreeMap<String, serde_json::Value>, path: &Path) -> Result<()> {
    let (spec, params) = match model {
        ClassifierModel::Transformer(m) => (ModelSpec::Transformer(m.config), &m.params),
        ClassifierModel::Rnn(m) => (ModelSpec::Rnn(m.config), &m.params),
    };
    let blob = blob_path(path);
    let mut bytes = Vec::with_capacity(params.scalar_count() * 8);
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            offset: bytes.len() / 8,
            shape: [t.rows, t.cols],
        });
        for v in &t.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        spec,
        binary: blob
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::InvalidParameter(format!("bad checkpoint path {}", path.display())))?
            .to_string(),
        tensors,
        metadata,
    };
    std::fs::write(&blob, bytes)?;
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Load a checkpoint written by [`save`].
pub fn load(path: &Path) -> Result<(ClassifierModel, Manifest)> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let blob_file = path.with_file_name(&manifest.binary);
    let bytes = std::fs::read(&blob_file)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Data(format!("{} is not a whole number of f64s", blob_file.display())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut params = Params::new();
    for e in &manifest.tensors {
        let n = e.shape[0] * e.shape[1];
        let data = values
            .get(e.offset..e.offset + n)
            .ok_or_else(|| Error::Data(format!("tensor {} overruns {}", e.name, blob_file.display())))?;
        params.push(e.name.clone(), Mat::from_vec(e.shape[0], e.shape[1], data.to_vec()));
    }
    if !params.is_finite() {
        return Err(Error::NonFinite(format!("parameters in {}", blob_file.display())));
    }
    let model = match manifest.spec {
        ModelSpec::Transformer(c) => ClassifierModel::Transformer(TransformerModel::from_params(c, params)?),
        ModelSpec::Rnn(c) => ClassifierModel::Rnn(RnnModel::from_params(c, params)?),
    };
    Ok((model, manifest))
}
