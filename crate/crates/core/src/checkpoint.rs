//! Weight checkpoints shared by the spiking network and the dense oracle.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "SMLPCKPT"
//! version    u32      1
//! n_sizes    u32      number of layer sizes (weight matrices + 1)
//! sizes      u64 × n_sizes
//! weights    f64 × Σ sizes[l]·sizes[l+1], matrix by matrix, row-major
//! ```
//!
//! A JSON sidecar at `<path>.json` may carry the training configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;

const MAGIC: &[u8; 8] = b"SMLPCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Matrix>,
}

impl Checkpoint {
    pub fn new(weights: Vec<Matrix>) -> Result<Self> {
        let first = weights.first().ok_or_else(|| Error::Checkpoint("no weight matrices".into()))?;
        let mut layer_sizes = vec![first.rows()];
        for w in &weights {
            check_len("checkpoint layer chaining", *layer_sizes.last().unwrap(), w.rows())?;
            layer_sizes.push(w.cols());
        }
        Ok(Self { layer_sizes, weights })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n_weights: usize = self.weights.iter().map(|w| w.as_slice().len()).sum();
        let mut out = Vec::with_capacity(16 + 8 * (self.layer_sizes.len() + n_weights));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &s in &self.layer_sizes {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
        for w in &self.weights {
            for x in w.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        if n < 2 {
            return Err(Error::Checkpoint(format!("need at least 2 layer sizes, got {n}")));
        }
        let layer_sizes = (0..n).map(|_| r.u64().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
        let mut weights = Vec::with_capacity(n - 1);
        for p in layer_sizes.windows(2) {
            let len = p[0]
                .checked_mul(p[1])
                .ok_or_else(|| Error::Checkpoint("layer sizes overflow".into()))?;
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            weights.push(Matrix::from_vec(p[0], p[1], data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { layer_sizes, weights })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    let mut s = path.as_ref().as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_sidecar<T: Serialize>(path: impl AsRef<Path>, config: &T) -> Result<()> {
    fs::write(sidecar_path(path), serde_json::to_string_pretty(config)?)?;
    Ok(())
}

pub fn load_sidecar<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
