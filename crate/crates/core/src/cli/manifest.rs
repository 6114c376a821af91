use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub started: String,
    pub finished: String,
    /// Artifact path relative to the run directory, mapped to its SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

/// Index of every artifact in a run directory, keyed by the stage that wrote it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub data_hash: Option<String>,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hashes of every file under `path` (or of `path` itself), relative to `root`.
pub fn hash_tree(root: &Path, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            for e in std::fs::read_dir(&p).map_err(|e| Error::io(&p, e))? {
                stack.push(e.map_err(|e| Error::io(&p, e))?.path());
            }
        } else {
            let rel = p.strip_prefix(root).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            out.insert(rel, sha256_file(&p)?);
        }
    }
    Ok(out)
}

impl RunManifest {
    pub fn load_or_new(dir: &Path, config_hash: &str) -> Result<Self> {
        let p = dir.join(RUN_MANIFEST);
        if p.exists() {
            let m: RunManifest = serde_json::from_slice(&std::fs::read(&p).map_err(|e| Error::io(&p, e))?)?;
            if m.config_hash == config_hash {
                return Ok(m);
            }
            log::warn!("run directory was produced by a different configuration; starting a fresh manifest");
        }
        Ok(Self { config_hash: config_hash.to_string(), ..Default::default() })
    }

    /// Record `stage` with the hashes of `paths`, replacing any earlier record of it.
    pub fn record(&mut self, dir: &Path, stage: &str, started: String, paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
        let mut artifacts = BTreeMap::new();
        for p in paths {
            artifacts.extend(hash_tree(dir, p)?);
        }
        // an artifact belongs to exactly one stage
        for (name, rec) in self.stages.iter_mut() {
            if name != stage {
                rec.artifacts.retain(|k, _| !artifacts.contains_key(k));
            }
        }
        self.stages.insert(stage.to_string(), StageRecord { started, finished: now(), artifacts: artifacts.clone() });
        Ok(artifacts)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let p = dir.join(RUN_MANIFEST);
        std::fs::write(&p, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(&p, e))
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
