//! Binary checkpoint container.
//!
//! Layout:
//!
//! ```text
//! magic   8 bytes   "SEQBEDCK"
//! len     u32 LE    length of the JSON header in bytes
//! header  len bytes UTF-8 JSON: format version, metadata, and for every
//!                   network its layer sizes, activations and tensor
//!                   names/shapes in storage order
//! payload           every tensor of every network, in header order, as
//!                   little-endian f32 in row-major order
//! ```
//!
//! Encoding is canonical (metadata keys sorted, fixed field order), so
//! decoding and re-encoding reproduces the input byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Network, ParameterSet, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SEQBEDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    metadata: BTreeMap<String, String>,
    networks: Vec<NetworkHeader>,
}

#[derive(Serialize, Deserialize)]
struct NetworkHeader {
    name: String,
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    tensors: Vec<TensorHeader>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub networks: Vec<(String, Network<f32>)>,
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Option<&Network<f32>> {
        self.networks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, net)| net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            metadata: self.metadata.clone(),
            networks: self
                .networks
                .iter()
                .map(|(name, net)| NetworkHeader {
                    name: name.clone(),
                    sizes: net.sizes().to_vec(),
                    activations: net.activations().to_vec(),
                    tensors: net
                        .params()
                        .tensors()
                        .iter()
                        .map(|t| TensorHeader {
                            name: t.name.clone(),
                            shape: t.shape.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload_len: usize = self
            .networks
            .iter()
            .map(|(_, n)| n.params().len() * 4)
            .sum();
        let mut out = Vec::with_capacity(12 + json.len() + payload_len);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, net) in &self.networks {
            for x in net.params().iter_values() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing magic header"));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let json = bytes
            .get(12..12 + len)
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                header.version
            )));
        }
        let mut payload = &bytes[12 + len..];
        let mut networks = Vec::with_capacity(header.networks.len());
        for nh in header.networks {
            let mut tensors = Vec::with_capacity(nh.tensors.len());
            for th in nh.tensors {
                let count: usize = th.shape.iter().product();
                if payload.len() < count * 4 {
                    return Err(bad("truncated payload"));
                }
                let (chunk, rest) = payload.split_at(count * 4);
                let data = chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                payload = rest;
                tensors.push(Tensor {
                    name: th.name,
                    shape: th.shape,
                    data,
                });
            }
            let net = Network::from_parts(&nh.sizes, &nh.activations, ParameterSet::new(tensors))?;
            networks.push((nh.name, net));
        }
        if !payload.is_empty() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            metadata: header.metadata,
            networks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
