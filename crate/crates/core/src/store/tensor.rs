//! The `.pgat` tensor codec.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size      field
//! 0       4         magic "PGAT"
//! 4       4         version (u32) = 1
//! 8       1         dtype code: 0 = f32, 1 = f64, 2 = i64
//! 9       1         ndim (u8, >= 1)
//! 10      8*ndim    dims (u64 each)
//! ...     payload   row-major values, little-endian
//! ```

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{PgaError, Result};

pub const MAGIC: &[u8; 4] = b"PGAT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
    I64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
            DType::I64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            2 => Ok(DType::I64),
            other => Err(PgaError::UnknownDtype(other)),
        }
    }

    pub fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 | DType::I64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::I64 => "i64",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::I64(v) => v.len(),
        }
    }

    fn first_non_finite(&self) -> Option<usize> {
        match self {
            TensorData::F32(v) => v.iter().position(|x| !x.is_finite()),
            TensorData::F64(v) => v.iter().position(|x| !x.is_finite()),
            TensorData::I64(_) => None,
        }
    }
}

/// Dense row-major array with an explicit dtype and shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        if shape.is_empty() {
            return Err(PgaError::EmptyShape);
        }
        let expected = checked_numel(&shape)?;
        if expected != data.len() {
            return Err(PgaError::ShapeDataMismatch {
                shape,
                expected,
                found: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(values))
    }

    pub fn from_f64(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::new(shape, TensorData::F64(values))
    }

    pub fn from_i64(shape: Vec<usize>, values: Vec<i64>) -> Result<Self> {
        Self::new(shape, TensorData::I64(values))
    }

    /// Stores a matrix row-major as f32, the canonical dtype for hidden states.
    pub fn from_matrix_f32(m: &DMatrix<f64>) -> Self {
        let mut values = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                values.push(m[(i, j)] as f32);
            }
        }
        Tensor {
            shape: vec![m.nrows(), m.ncols()],
            data: TensorData::F32(values),
        }
    }

    pub fn from_matrix_f64(m: &DMatrix<f64>) -> Self {
        let mut values = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                values.push(m[(i, j)]);
            }
        }
        Tensor {
            shape: vec![m.nrows(), m.ncols()],
            data: TensorData::F64(values),
        }
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::I64(_) => DType::I64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Values promoted to f64 (integers converted exactly where representable).
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::I64(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn as_i64(&self) -> Result<&[i64]> {
        match &self.data {
            TensorData::I64(v) => Ok(v),
            _ => Err(PgaError::DtypeMismatch {
                expected: "i64",
                found: self.dtype().name(),
            }),
        }
    }

    /// Interprets a rank-2 tensor as an f64 matrix.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.shape.len() != 2 {
            return Err(PgaError::invalid(format!(
                "expected a rank-2 tensor, found shape {:?}",
                self.shape
            )));
        }
        Ok(DMatrix::from_row_slice(
            self.shape[0],
            self.shape[1],
            &self.to_f64_vec(),
        ))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.first_non_finite() {
            Some(index) => Err(PgaError::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// Encodes to the `.pgat` byte layout. Non-finite values are rejected.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check_finite()?;
        if self.shape.len() > u8::MAX as usize {
            return Err(PgaError::invalid(format!(
                "rank {} exceeds the format limit of 255",
                self.shape.len()
            )));
        }
        let header = 4 + 4 + 1 + 1 + 8 * self.shape.len();
        let mut out = Vec::with_capacity(header + self.numel() * self.dtype().width());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.dtype().code());
        out.push(self.shape.len() as u8);
        for &dim in &self.shape {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        Ok(out)
    }

    /// Decodes a `.pgat` buffer and rejects non-finite values.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let t = Self::from_bytes_allow_non_finite(bytes)?;
        t.check_finite()?;
        Ok(t)
    }

    pub fn from_bytes_allow_non_finite(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(PgaError::TruncatedHeader("magic"));
        }
        if &bytes[..4] != MAGIC {
            return Err(PgaError::BadMagic {
                found: bytes[..4].to_vec(),
            });
        }
        if bytes.len() < 10 {
            return Err(PgaError::TruncatedHeader("version/dtype/ndim"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(PgaError::UnsupportedVersion(version));
        }
        let dtype = DType::from_code(bytes[8])?;
        let ndim = bytes[9] as usize;
        if ndim == 0 {
            return Err(PgaError::EmptyShape);
        }
        let dims_end = 10 + 8 * ndim;
        if bytes.len() < dims_end {
            return Err(PgaError::TruncatedHeader("dims"));
        }
        let raw_dims: Vec<u64> = bytes[10..dims_end]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let shape = raw_dims
            .iter()
            .map(|&d| usize::try_from(d).map_err(|_| PgaError::ShapeOverflow(raw_dims.clone())))
            .collect::<Result<Vec<_>>>()?;
        let numel = checked_numel(&shape).map_err(|_| PgaError::ShapeOverflow(raw_dims.clone()))?;
        let expected = numel
            .checked_mul(dtype.width())
            .ok_or_else(|| PgaError::ShapeOverflow(raw_dims.clone()))?;
        let payload = &bytes[dims_end..];
        if payload.len() < expected {
            return Err(PgaError::TruncatedPayload {
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(PgaError::TrailingBytes(payload.len() - expected));
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
            DType::I64 => TensorData::I64(
                payload
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        };
        Ok(Tensor { shape, data })
    }
}

fn checked_numel(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| PgaError::ShapeOverflow(shape.iter().map(|&d| d as u64).collect()))
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = t.to_bytes()?;
    fs::write(path, bytes).map_err(|e| PgaError::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| PgaError::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

pub fn read_tensor_allow_non_finite(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| PgaError::io(path, e))?;
    Tensor::from_bytes_allow_non_finite(&bytes)
}
