//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "COEVOCK1"
//! 8       4     header length H (u32)
//! 12      H     UTF-8 JSON header {role, arch, seed, generation, frozen, param_count}
//! 12+H    8     parameter count N (u64), equal to header.param_count
//! 20+H    8N    parameters as IEEE-754 f64
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Arch, ModelHandle, Role};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"COEVOCK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub role: Role,
    pub arch: Arch,
    pub seed: u64,
    pub generation: usize,
    pub frozen: bool,
    pub param_count: usize,
}

pub fn encode(model: &ModelHandle) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        role: model.role(),
        arch: model.arch.clone(),
        seed: model.seed,
        generation: model.generation,
        frozen: model.is_frozen(),
        param_count: model.params().len(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + 8 * model.params().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<ModelHandle> {
    let bad = |msg: &str| Error::Schema(format!("checkpoint: {msg}"));
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    let rest = &bytes[12 + hlen..];
    if rest.len() < 8 {
        return Err(bad("truncated parameter count"));
    }
    let n = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    if n != header.param_count || n != header.arch.num_params() {
        return Err(bad("parameter count disagrees with header"));
    }
    if header.role != header.arch.role() {
        return Err(bad("role disagrees with arch"));
    }
    let data = &rest[8..];
    if data.len() != 8 * n {
        return Err(bad("parameter payload has wrong length"));
    }
    let params = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut m = ModelHandle::from_params(header.arch, params)?;
    m.seed = header.seed;
    m.generation = header.generation;
    if header.frozen {
        m = m.freeze();
    }
    Ok(m)
}

pub fn save(model: &ModelHandle, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelHandle> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{InitConfig, ReportArch};

    #[test]
    fn round_trip() {
        let mut m = ModelHandle::init(
            Arch::Report(ReportArch {
                vocab_size: 5,
                num_classes: 2,
            }),
            11,
            &InitConfig::default(),
        );
        m.generation = 2;
        let m = m.freeze();
        let back = decode(&encode(&m).unwrap()).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.seed, 11);
        assert_eq!(back.generation, 2);
        assert!(back.is_frozen());
    }

    #[test]
    fn corruption_detected() {
        let m = ModelHandle::zeros(Arch::Report(ReportArch {
            vocab_size: 5,
            num_classes: 2,
        }));
        let bytes = encode(&m).unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode(&bad_magic), Err(Error::Schema(_))));
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Schema(_))));
    }
}
