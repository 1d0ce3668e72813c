//! Hidden-state bundles: a `manifest.json` plus one `.pgat` file per layer.
//!
//! ```json
//! {
//!   "model_id": "pythia-160m",
//!   "d": 768,
//!   "num_layers": 12,
//!   "n_contexts": 1000,
//!   "final_post_ln": true,
//!   "checkpoint_step": 143000,
//!   "token_ids": "token_ids.pgat",
//!   "layers": { "0": "layer_0.pgat", "1": "layer_1.pgat", ... }
//! }
//! ```
//!
//! Layers are indexed `0..=num_layers`; layer 0 is the embedding output.
//! Unknown top-level keys are preserved in `extra` (extractor provenance).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::tensor::{read_tensor, write_tensor, Tensor};
use crate::error::{PgaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub model_id: String,
    pub d: usize,
    pub num_layers: usize,
    pub n_contexts: usize,
    pub final_post_ln: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_ids: Option<String>,
    pub layers: BTreeMap<String, String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl BundleManifest {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let m: BundleManifest = serde_json::from_str(text).map_err(|e| PgaError::Json {
            context: "bundle manifest".into(),
            message: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    /// Checks layer keys and returns the file name for every layer `0..=num_layers`.
    pub fn layer_files(&self) -> Result<Vec<&str>> {
        let mut by_index = BTreeMap::new();
        for (key, file) in &self.layers {
            let idx: usize = key
                .parse()
                .map_err(|_| PgaError::invalid(format!("layer key {key:?} is not an index")))?;
            if idx > self.num_layers {
                return Err(PgaError::invalid(format!(
                    "layer {idx} is outside 0..={}",
                    self.num_layers
                )));
            }
            if by_index.insert(idx, file.as_str()).is_some() {
                return Err(PgaError::invalid(format!("layer {idx} listed twice")));
            }
        }
        (0..=self.num_layers)
            .map(|l| by_index.get(&l).copied().ok_or(PgaError::MissingLayer(l)))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_contexts == 0 {
            return Err(PgaError::invalid("manifest d and n_contexts must be positive"));
        }
        self.layer_files().map(|_| ())
    }
}

/// Last-token hidden states for every layer of one model (or checkpoint).
#[derive(Debug, Clone)]
pub struct HiddenStateBundle {
    pub model_id: String,
    pub d: usize,
    pub num_layers: usize,
    pub n_contexts: usize,
    layers: Vec<Tensor>,
    pub token_ids: Option<Vec<i64>>,
    pub final_post_ln: bool,
    pub checkpoint_step: Option<u64>,
}

impl HiddenStateBundle {
    /// Builds a bundle from in-memory layers; `layers.len()` must be `num_layers + 1`.
    pub fn new(
        model_id: impl Into<String>,
        layers: Vec<Tensor>,
        token_ids: Option<Vec<i64>>,
        final_post_ln: bool,
        checkpoint_step: Option<u64>,
    ) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| PgaError::invalid("a bundle needs at least one layer"))?;
        if first.shape().len() != 2 {
            return Err(PgaError::LayerShape {
                layer: 0,
                expected: vec![0, 0],
                found: first.shape().to_vec(),
            });
        }
        let (n, d) = (first.shape()[0], first.shape()[1]);
        for (l, t) in layers.iter().enumerate() {
            if t.shape() != [n, d] {
                return Err(PgaError::LayerShape {
                    layer: l,
                    expected: vec![n, d],
                    found: t.shape().to_vec(),
                });
            }
        }
        if let Some(ids) = &token_ids {
            if ids.len() != n {
                return Err(PgaError::DimensionMismatch {
                    what: "token_ids length",
                    expected: n,
                    found: ids.len(),
                });
            }
            if let Some(pos) = ids.iter().position(|&t| t < 0) {
                return Err(PgaError::invalid(format!("negative token id at context {pos}")));
            }
        }
        Ok(HiddenStateBundle {
            model_id: model_id.into(),
            d,
            num_layers: layers.len() - 1,
            n_contexts: n,
            layers,
            token_ids,
            final_post_ln,
            checkpoint_step,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_tensor(&self, layer: usize) -> &Tensor {
        &self.layers[layer]
    }

    /// Layer states promoted to f64, `n_contexts × d`.
    pub fn layer_matrix(&self, layer: usize) -> DMatrix<f64> {
        self.layers[layer]
            .to_matrix()
            .expect("bundle layers are validated rank-2")
    }

    /// ℓ / L, with a single-layer bundle reported at depth 1.
    pub fn relative_depth(&self, layer: usize) -> f64 {
        if self.num_layers == 0 {
            1.0
        } else {
            layer as f64 / self.num_layers as f64
        }
    }

    pub fn check_vocab(&self, vocab: usize) -> Result<()> {
        if let Some(ids) = &self.token_ids {
            if let Some(pos) = ids.iter().position(|&t| t as u64 >= vocab as u64) {
                return Err(PgaError::invalid(format!(
                    "token id {} at context {pos} is outside vocab {vocab}",
                    ids[pos]
                )));
            }
        }
        Ok(())
    }
}

pub fn load_bundle(manifest_path: impl AsRef<Path>) -> Result<HiddenStateBundle> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| PgaError::io(manifest_path, e))?;
    let manifest = BundleManifest::from_json_str(&text)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let files = manifest.layer_files()?;
    let mut layers = Vec::with_capacity(files.len());
    for (l, file) in files.iter().enumerate() {
        let path = dir.join(file);
        if !path.exists() {
            return Err(PgaError::MissingLayer(l));
        }
        let t = read_tensor(&path)?;
        if t.shape() != [manifest.n_contexts, manifest.d] {
            return Err(PgaError::LayerShape {
                layer: l,
                expected: vec![manifest.n_contexts, manifest.d],
                found: t.shape().to_vec(),
            });
        }
        layers.push(t);
    }
    let token_ids = match &manifest.token_ids {
        Some(file) => {
            let t = read_tensor(dir.join(file))?;
            if t.shape() != [manifest.n_contexts] {
                return Err(PgaError::DimensionMismatch {
                    what: "token_ids length",
                    expected: manifest.n_contexts,
                    found: t.numel(),
                });
            }
            Some(t.as_i64()?.to_vec())
        }
        None => None,
    };
    HiddenStateBundle::new(
        manifest.model_id,
        layers,
        token_ids,
        manifest.final_post_ln,
        manifest.checkpoint_step,
    )
}

/// Writes `manifest.json`, `layer_<i>.pgat` and optionally `token_ids.pgat` into `dir`.
pub fn write_bundle(bundle: &HiddenStateBundle, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| PgaError::io(dir, e))?;
    let mut layers = BTreeMap::new();
    for l in 0..bundle.layer_count() {
        let name = format!("layer_{l}.pgat");
        write_tensor(bundle.layer_tensor(l), dir.join(&name))?;
        layers.insert(l.to_string(), name);
    }
    let token_ids = match &bundle.token_ids {
        Some(ids) => {
            let name = "token_ids.pgat".to_string();
            write_tensor(&Tensor::from_i64(vec![ids.len()], ids.clone())?, dir.join(&name))?;
            Some(name)
        }
        None => None,
    };
    let manifest = BundleManifest {
        model_id: bundle.model_id.clone(),
        d: bundle.d,
        num_layers: bundle.num_layers,
        n_contexts: bundle.n_contexts,
        final_post_ln: bundle.final_post_ln,
        checkpoint_step: bundle.checkpoint_step,
        token_ids,
        layers,
        extra: BTreeMap::new(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| PgaError::io(&path, e))?;
    Ok(path)
}
