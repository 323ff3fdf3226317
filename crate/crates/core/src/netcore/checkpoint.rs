//! Checkpoint file: one JSON header line followed by the raw little-endian
//! `f64` parameter vector.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetArch, TransportNet};
use crate::error::{Error, Result};
use crate::synthdata::SourceSpec;

pub const CHECKPOINT_FORMAT: &str = "driftflow-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub arch: NetArch,
    pub step: u64,
    pub param_count: usize,
    /// Source distribution the network was trained from.
    #[serde(default)]
    pub source: Option<SourceSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: TransportNet,
    pub step: u64,
    pub source: Option<SourceSpec>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            arch: *self.net.arch(),
            step: self.step,
            param_count: self.net.params().len(),
            source: self.source,
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for p in self.net.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |detail: String| Error::Corrupt {
            path: path.to_path_buf(),
            detail,
        };
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("missing header line".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| corrupt(format!("bad header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT || header.version != 1 {
            return Err(corrupt(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        let body = &bytes[newline + 1..];
        if header.param_count != header.arch.param_count() || body.len() != 8 * header.param_count {
            return Err(corrupt(format!(
                "expected {} parameters, found {} bytes",
                header.arch.param_count(),
                body.len()
            )));
        }
        let params = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let net = TransportNet::from_params(header.arch, params).map_err(|e| corrupt(e.to_string()))?;
        Ok(Self {
            net,
            step: header.step,
            source: header.source,
        })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}
