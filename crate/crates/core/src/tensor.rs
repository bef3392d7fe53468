//! Binary tensor interchange format.
//!
//! Layout (little-endian, v1):
//!
//! ```text
//! magic "FTEN" (4) | version u8 = 1 | dtype u8 (0 = f32) | ndim u8 | pad u8 = 0
//! ndim x u32 dims
//! row-major payload, prod(dims) x f32
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: [u8; 4] = *b"FTEN";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
}

impl DType {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            code => Err(Error::UnsupportedDtype { code }),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
        }
    }
}

/// Dense row-major float tensor with a validated shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        validate_shape(&shape)?;
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("holds {} scalars, data has {}", numel, data.len()),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self { shape, data })
    }

    pub fn dtype(&self) -> DType {
        DType::F32
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// `(rows, cols)` if the tensor is two-dimensional.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::ShapeMismatch(format!(
                "expected a 2-D tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        let (rows, cols) = self.dims2()?;
        Ok(Matrix::from_f32(rows, cols, &self.data))
    }

    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        Self::new(
            vec![m.rows(), m.cols()],
            m.as_slice().iter().map(|&v| v as f32).collect(),
        )
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 4 * self.shape.len() + self.dtype().size() * self.data.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(FORMAT_VERSION);
        out.push(self.dtype() as u8);
        out.push(self.shape.len() as u8);
        out.push(0);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                path: Default::default(),
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedPayload {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { version: bytes[4] });
        }
        let dtype = DType::from_code(bytes[5])?;
        let ndim = bytes[6] as usize;
        let dims_end = HEADER_LEN + 4 * ndim;
        if bytes.len() < dims_end {
            return Err(Error::TruncatedPayload {
                expected: dims_end,
                found: bytes.len(),
            });
        }
        let shape: Vec<usize> = bytes[HEADER_LEN..dims_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        validate_shape(&shape)?;
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidShape {
                shape: shape.clone(),
                reason: "element count overflows".into(),
            })?;
        let expected = numel
            .checked_mul(dtype.size())
            .and_then(|n| n.checked_add(dims_end))
            .ok_or_else(|| Error::InvalidShape {
                shape: shape.clone(),
                reason: "byte length overflows".into(),
            })?;
        if bytes.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::TrailingData {
                extra: bytes.len() - expected,
            });
        }
        let data: Vec<f32> = bytes[dims_end..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(shape, data)
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    let reason = if shape.is_empty() {
        "tensors need at least one dimension"
    } else if shape.len() > u8::MAX as usize {
        "more than 255 dimensions"
    } else if shape.contains(&0) {
        "every dimension must be at least 1"
    } else if shape.iter().any(|&d| d > u32::MAX as usize) {
        "dimension does not fit in u32"
    } else {
        return Ok(());
    };
    Err(Error::InvalidShape {
        shape: shape.to_vec(),
        reason: reason.into(),
    })
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.to_path_buf(),
        },
        _ => Error::io(path, e),
    })?;
    FeatureTensor::from_bytes(&bytes).map_err(|e| match e {
        Error::BadMagic { .. } => Error::BadMagic {
            path: path.to_path_buf(),
        },
        other => other,
    })
}

pub fn write_tensor(t: &FeatureTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, t.to_bytes()).map_err(|e| Error::io(path, e))
}
