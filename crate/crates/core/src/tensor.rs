//! SPTN: a minimal little-endian tensor interchange format.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "SPTN"
//! 4       2           version (u16 LE) = 1
//! 6       2           ndim (u16 LE), 1..=4
//! 8       4*ndim      dims (u32 LE each)
//! ...     4*prod      payload, f32 LE, row-major (last dim fastest)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{FeatureMap, Image, SoftMask};

pub const MAGIC: [u8; 4] = *b"SPTN";
pub const VERSION: u16 = 1;
pub const MAX_RANK: usize = 4;

/// A dense `f32` tensor read from or destined for an SPTN file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(Error::BadRank(dims.len() as u16));
        }
        let count = element_count(&dims)?;
        if count != data.len() {
            return Err(Error::shape(format!("{count} elements"), format!("{} elements", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u16).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            if bytes.len() >= 4 && bytes[..4] != MAGIC {
                return Err(Error::BadMagic(bytes[..4].try_into().unwrap()));
            }
            return Err(Error::ShortHeader);
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let ndim = u16::from_le_bytes([bytes[6], bytes[7]]);
        if ndim == 0 || ndim as usize > MAX_RANK {
            return Err(Error::BadRank(ndim));
        }
        let header_len = 8 + 4 * ndim as usize;
        if bytes.len() < header_len {
            return Err(Error::ShortHeader);
        }
        let dims: Vec<u32> = bytes[8..header_len]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let count = element_count(&dims)?;
        let payload_len = count.checked_mul(4).ok_or(Error::DimOverflow)?;
        let payload = &bytes[header_len..];
        if payload.len() < payload_len {
            return Err(Error::ShortPayload {
                expected: payload_len,
                found: payload.len(),
            });
        }
        if payload.len() > payload_len {
            return Err(Error::InvalidInput(format!(
                "tensor payload has {} trailing bytes",
                payload.len() - payload_len
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }
}

fn element_count(dims: &[u32]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .filter(|&n| n.checked_mul(4).is_some())
        .ok_or(Error::DimOverflow)
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

pub fn write_tensor_file(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.to_bytes()).map_err(|e| Error::io(path, e))
}

impl From<&FeatureMap> for Tensor {
    fn from(f: &FeatureMap) -> Self {
        Tensor {
            dims: f.shape().iter().map(|&d| d as u32).collect(),
            data: f.as_slice().iter().map(|&v| v as f32).collect(),
        }
    }
}

impl From<&SoftMask> for Tensor {
    fn from(m: &SoftMask) -> Self {
        Tensor {
            dims: vec![m.height() as u32, m.width() as u32],
            data: m.as_slice().iter().map(|&v| v as f32).collect(),
        }
    }
}

impl From<&Image> for Tensor {
    fn from(img: &Image) -> Self {
        Tensor {
            dims: vec![img.height() as u32, img.width() as u32, 3],
            data: img.as_slice().iter().map(|&v| v as f32).collect(),
        }
    }
}

impl TryFrom<Tensor> for FeatureMap {
    type Error = Error;

    /// Rank 3 is read as `C×H×W`; rank 4 must carry a leading batch of 1;
    /// rank 2 is a single plane and rank 1 a single row.
    fn try_from(t: Tensor) -> Result<Self> {
        let d: Vec<usize> = t.dims.iter().map(|&d| d as usize).collect();
        let (c, h, w) = match d.as_slice() {
            [n] => (1, 1, *n),
            [h, w] => (1, *h, *w),
            [c, h, w] => (*c, *h, *w),
            [1, c, h, w] => (*c, *h, *w),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "cannot interpret tensor of dims {:?} as a feature map",
                    t.dims
                )))
            }
        };
        FeatureMap::new(c, h, w, t.data.into_iter().map(f64::from).collect())
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<FeatureMap> {
    FeatureMap::try_from(read_tensor_file(path)?)
}

pub fn write_tensor(features: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    write_tensor_file(&Tensor::from(features), path)
}
