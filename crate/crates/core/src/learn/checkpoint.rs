//! Checkpoints: `<stem>.bin` holds the raw parameters, `<stem>.json` the
//! metadata.
//!
//! Binary layout (little endian): magic `VSRP`, u32 format version, u32
//! parameter count, then one f64 per parameter.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::toy::ToyPolicy;
use super::LearnError;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"VSRP";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub n_params: usize,
    pub temperature: f64,
    /// Training stage that produced the parameters, e.g. `sft` or `gspo`.
    pub stage: String,
    pub step: usize,
    pub seed: u64,
    /// Config of the producing run.
    #[serde(default)]
    pub config: serde_json::Value,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn err(e: impl std::fmt::Display) -> LearnError {
    LearnError::Checkpoint(e.to_string())
}

pub fn save_checkpoint(
    stem: &Path,
    policy: &ToyPolicy,
    meta: &CheckpointMeta,
) -> Result<(), LearnError> {
    let mut bytes = Vec::with_capacity(12 + 8 * policy.params.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(policy.params.len() as u32).to_le_bytes());
    for p in &policy.params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(with_ext(stem, "bin"), bytes).map_err(err)?;
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        n_params: policy.params.len(),
        temperature: policy.temperature,
        ..meta.clone()
    };
    fs::write(
        with_ext(stem, "json"),
        serde_json::to_string_pretty(&meta).map_err(err)?,
    )
    .map_err(err)
}

pub fn load_checkpoint(stem: &Path) -> Result<(ToyPolicy, CheckpointMeta), LearnError> {
    let meta: CheckpointMeta =
        serde_json::from_str(&fs::read_to_string(with_ext(stem, "json")).map_err(err)?)
            .map_err(err)?;
    let bytes = fs::read(with_ext(stem, "bin")).map_err(err)?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(err("not a parameter dump"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION || meta.version != CHECKPOINT_VERSION {
        return Err(err(format!("unsupported checkpoint version {version}")));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() != 12 + 8 * n || n != meta.n_params || n != super::N_PARAMS {
        return Err(err("parameter count mismatch"));
    }
    let params = bytes[12..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((ToyPolicy::new(params, meta.temperature), meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ckpt");
        let pol = ToyPolicy::new((0..9).map(|i| i as f64 * 0.37 - 1.0).collect(), 0.8);
        let meta = CheckpointMeta {
            version: 0,
            n_params: 0,
            temperature: 0.0,
            stage: "sft".into(),
            step: 12,
            seed: 4,
            config: serde_json::json!({"lr": 0.05}),
        };
        save_checkpoint(&stem, &pol, &meta).unwrap();
        let (back, m) = load_checkpoint(&stem).unwrap();
        assert_eq!(back, pol);
        assert_eq!(m.step, 12);
        assert_eq!(m.version, CHECKPOINT_VERSION);
    }
}
