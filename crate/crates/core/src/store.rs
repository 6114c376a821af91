//! Weight files shared by every non-generator checkpoint: `params.bin` holds the little-endian
//! `f64` weights of each parameter set in order, `manifest.json` holds a typed header.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Params;

pub const PARAMS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope<M> {
    pub format_version: u32,
    pub kind: String,
    pub meta: M,
    pub param_counts: Vec<usize>,
    pub params_sha256: String,
}

pub fn params_blob(parts: &[&Params]) -> Vec<u8> {
    parts.iter().flat_map(|p| p.flat()).flat_map(|x| x.to_le_bytes()).collect()
}

/// Write a checkpoint and return the content hash of its weights.
pub fn save<M: Serialize>(dir: &Path, kind: &str, meta: &M, parts: &[&Params]) -> Result<String> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes = params_blob(parts);
    let sha = hex::encode(Sha256::digest(&bytes));
    let env = Envelope {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        meta,
        param_counts: parts.iter().map(|p| p.count()).collect(),
        params_sha256: sha.clone(),
    };
    let pp = dir.join(PARAMS_FILE);
    std::fs::write(&pp, &bytes).map_err(|e| Error::io(&pp, e))?;
    let mp = dir.join(MANIFEST_FILE);
    std::fs::write(&mp, serde_json::to_vec_pretty(&env)?).map_err(|e| Error::io(&mp, e))?;
    Ok(sha)
}

pub fn read_manifest<M: DeserializeOwned>(dir: &Path, kind: &str) -> Result<Envelope<M>> {
    let mp = dir.join(MANIFEST_FILE);
    let env: Envelope<M> = serde_json::from_slice(&std::fs::read(&mp).map_err(|e| Error::io(&mp, e))?)?;
    if env.format_version != FORMAT_VERSION {
        return Err(Error::InvalidInput(format!("unsupported checkpoint format {}", env.format_version)));
    }
    if env.kind != kind {
        return Err(Error::Config(format!("{} holds a {} checkpoint, expected {kind}", dir.display(), env.kind)));
    }
    Ok(env)
}

/// Fill `parts` from the weights in `dir`, checking the hash and every parameter count.
pub fn load_into<M>(dir: &Path, env: &Envelope<M>, parts: &mut [&mut Params]) -> Result<()> {
    let pp = dir.join(PARAMS_FILE);
    let bytes = std::fs::read(&pp).map_err(|e| Error::io(&pp, e))?;
    if hex::encode(Sha256::digest(&bytes)) != env.params_sha256 {
        return Err(Error::InvalidInput(format!("{} does not match the manifest hash", pp.display())));
    }
    let counts: Vec<usize> = parts.iter().map(|p| p.count()).collect();
    if counts != env.param_counts || bytes.len() != 8 * counts.iter().sum::<usize>() {
        return Err(Error::InvalidInput("parameter blob does not match the recorded architecture".into()));
    }
    let flat: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut off = 0;
    for (p, n) in parts.iter_mut().zip(counts) {
        p.set_flat(&flat[off..off + n]);
        off += n;
    }
    Ok(())
}
