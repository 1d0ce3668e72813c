//! Readout interfaces (`W_U` or `W_E`) described by a `readout.json`:
//!
//! ```json
//! {
//!   "kind": "unembedding",
//!   "matrix": "W_U.pgat",
//!   "ln_gamma": "ln_f_gamma.pgat",
//!   "ln_beta": "ln_f_beta.pgat",
//!   "tied": false
//! }
//! ```
//!
//! `matrix` is `vocab × d`. `ln_gamma`/`ln_beta` are length-`d` vectors and must
//! appear together. An optional `vocab` field is cross-checked when present.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::tensor::{read_tensor, write_tensor, Tensor, TensorData};
use crate::error::{PgaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutKind {
    Unembedding,
    InputEmbedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutDescriptor {
    pub kind: ReadoutKind,
    pub matrix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ln_gamma: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ln_beta: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tied: Option<bool>,
}

impl ReadoutDescriptor {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let desc: ReadoutDescriptor = serde_json::from_str(text).map_err(|e| PgaError::Json {
            context: "readout descriptor".into(),
            message: e.to_string(),
        })?;
        if desc.ln_gamma.is_some() != desc.ln_beta.is_some() {
            return Err(PgaError::invalid(
                "ln_gamma and ln_beta must be given together",
            ));
        }
        Ok(desc)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReadoutInterface {
    pub kind: ReadoutKind,
    matrix: Tensor,
    pub ln: Option<LayerNormParams>,
}

impl ReadoutInterface {
    pub fn new(kind: ReadoutKind, matrix: Tensor, ln: Option<LayerNormParams>) -> Result<Self> {
        if matrix.shape().len() != 2 || matrix.shape()[0] == 0 || matrix.shape()[1] == 0 {
            return Err(PgaError::invalid(format!(
                "readout matrix must be a non-empty vocab×d matrix, found shape {:?}",
                matrix.shape()
            )));
        }
        matrix.check_finite()?;
        let d = matrix.shape()[1];
        if let Some(p) = &ln {
            for (what, v) in [("ln_gamma length", &p.gamma), ("ln_beta length", &p.beta)] {
                if v.len() != d {
                    return Err(PgaError::DimensionMismatch {
                        what,
                        expected: d,
                        found: v.len(),
                    });
                }
            }
        }
        Ok(ReadoutInterface { kind, matrix, ln })
    }

    pub fn from_matrix(kind: ReadoutKind, m: &DMatrix<f64>) -> Result<Self> {
        Self::new(kind, Tensor::from_matrix_f64(m), None)
    }

    pub fn vocab(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn d(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn matrix_tensor(&self) -> &Tensor {
        &self.matrix
    }

    /// Rows `start..end` of the readout matrix as f64.
    pub fn row_block(&self, start: usize, end: usize) -> DMatrix<f64> {
        let d = self.d();
        let rows = end - start;
        let slice = start * d..end * d;
        let values: Vec<f64> = match self.matrix.data() {
            TensorData::F32(v) => v[slice].iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v[slice].to_vec(),
            TensorData::I64(v) => v[slice].iter().map(|&x| x as f64).collect(),
        };
        DMatrix::from_row_slice(rows, d, &values)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        self.row_block(0, self.vocab())
    }
}

pub fn load_readout(descriptor_path: impl AsRef<Path>) -> Result<ReadoutInterface> {
    let path = descriptor_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PgaError::io(path, e))?;
    let desc = ReadoutDescriptor::from_json_str(&text)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let matrix = read_tensor(dir.join(&desc.matrix))?;
    if let (Some(v), [rows, _]) = (desc.vocab, matrix.shape()) {
        if v != *rows {
            return Err(PgaError::DimensionMismatch {
                what: "readout vocab",
                expected: v,
                found: *rows,
            });
        }
    }
    let ln = match (&desc.ln_gamma, &desc.ln_beta) {
        (Some(g), Some(b)) => Some(LayerNormParams {
            gamma: read_tensor(dir.join(g))?.to_f64_vec(),
            beta: read_tensor(dir.join(b))?.to_f64_vec(),
        }),
        _ => None,
    };
    ReadoutInterface::new(desc.kind, matrix, ln)
}

/// Writes the readout matrix (and LN parameters) next to a `readout.json`.
pub fn write_readout(
    readout: &ReadoutInterface,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| PgaError::io(dir, e))?;
    let matrix_name = format!("{stem}.pgat");
    write_tensor(&readout.matrix, dir.join(&matrix_name))?;
    let (ln_gamma, ln_beta) = match &readout.ln {
        Some(p) => {
            let g = format!("{stem}_ln_gamma.pgat");
            let b = format!("{stem}_ln_beta.pgat");
            write_tensor(&Tensor::from_f64(vec![p.gamma.len()], p.gamma.clone())?, dir.join(&g))?;
            write_tensor(&Tensor::from_f64(vec![p.beta.len()], p.beta.clone())?, dir.join(&b))?;
            (Some(g), Some(b))
        }
        None => (None, None),
    };
    let desc = ReadoutDescriptor {
        kind: readout.kind,
        matrix: matrix_name,
        ln_gamma,
        ln_beta,
        vocab: Some(readout.vocab()),
        tied: None,
    };
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&desc).expect("descriptor serializes");
    fs::write(&path, text).map_err(|e| PgaError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_params_come_in_pairs() {
        let err = ReadoutDescriptor::from_json_str(
            r#"{"kind":"unembedding","matrix":"w.pgat","ln_gamma":"g.pgat"}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("together"));
    }

    #[test]
    fn round_trip_with_ln() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let ro = ReadoutInterface::new(
            ReadoutKind::InputEmbedding,
            Tensor::from_matrix_f64(&m),
            Some(LayerNormParams {
                gamma: vec![1.0, 2.0],
                beta: vec![0.0, 0.5],
            }),
        )
        .unwrap();
        let path = write_readout(&ro, dir.path(), "w_e").unwrap();
        let back = load_readout(path).unwrap();
        assert_eq!(back.kind, ReadoutKind::InputEmbedding);
        assert_eq!(back.to_matrix(), m);
        assert_eq!(back.ln.unwrap().beta, vec![0.0, 0.5]);
    }

    #[test]
    fn ln_length_checked() {
        let m = DMatrix::<f64>::identity(2, 2);
        let err = ReadoutInterface::new(
            ReadoutKind::Unembedding,
            Tensor::from_matrix_f64(&m),
            Some(LayerNormParams {
                gamma: vec![1.0],
                beta: vec![0.0],
            }),
        )
        .unwrap_err();
        assert!(matches!(err, PgaError::DimensionMismatch { .. }));
    }
}
