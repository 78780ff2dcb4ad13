//! Binary model container.
//!
//! Layout: the 8-byte magic `PIVOTCKP`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header (kind,
//! variant, config, vocabularies, parameter names and shapes), then every
//! parameter as little-endian `f64`s in header order.

use std::collections::BTreeMap;
use std::path::Path;

use pivot_nn::{ParamSet, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PIVOTCKP";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub variant: Option<String>,
    pub config: serde_json::Value,
    pub vocabularies: BTreeMap<String, Vec<String>>,
    pub params: Vec<ParamShape>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: Header,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(20 + header.len() + 8 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, _, t) in self.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Hex SHA-256 of [`to_bytes`](Self::to_bytes).
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let mut rest = &bytes[20 + hlen..];
        let mut params = ParamSet::new();
        for shape in &header.params {
            let n = shape.rows * shape.cols;
            if rest.len() < 8 * n {
                return Err(Error::Checkpoint(format!("truncated data for {}", shape.name)));
            }
            let data = rest[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            rest = &rest[8 * n..];
            params.add(shape.name.clone(), Tensor::from_vec(shape.rows, shape.cols, data));
        }
        if !rest.is_empty() {
            return Err(bad("trailing bytes after parameters"));
        }
        Ok(Checkpoint { header, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.header.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.header.kind)));
        }
        Ok(())
    }

    pub fn vocabulary(&self, name: &str) -> Result<crate::corpus::Vocabulary> {
        self.header
            .vocabularies
            .get(name)
            .cloned()
            .map(Into::into)
            .ok_or_else(|| Error::Checkpoint(format!("missing vocabulary {name}")))
    }
}

pub fn shapes(params: &ParamSet) -> Vec<ParamShape> {
    params
        .iter()
        .map(|(_, name, t)| ParamShape {
            name: name.to_string(),
            rows: t.rows(),
            cols: t.cols(),
        })
        .collect()
}

/// Copies `source` into `target` after checking names and shapes match.
pub(crate) fn install_params(target: &mut ParamSet, source: ParamSet) -> Result<()> {
    if shapes(target) != shapes(&source) {
        return Err(Error::Checkpoint("parameter names or shapes differ from the configured model".into()));
    }
    *target = source;
    Ok(())
}
