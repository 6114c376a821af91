use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{GenDims, GenModel, Phase};
use super::train::GenTrainConfig;
use crate::dataio::{Dataset, FeatureScaler};
use crate::error::{Error, Result};

pub const PARAMS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

/// Everything needed to rebuild and use a saved generator, minus the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenManifest {
    pub format_version: u32,
    pub dims: GenDims,
    pub phase: Phase,
    pub train: GenTrainConfig,
    pub seed: u64,
    pub data_hash: String,
    pub tickers: Vec<String>,
    pub features: Vec<String>,
    pub macro_names: Vec<String>,
    pub scaler: FeatureScaler,
    pub macro_mean: Vec<f64>,
    pub macro_scale: Vec<f64>,
    pub param_counts: Vec<usize>,
    pub params_sha256: String,
}

impl GenManifest {
    pub fn describe(model: &GenModel, ds: &Dataset, train: &GenTrainConfig, seed: u64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            dims: model.dims.clone(),
            phase: model.phase,
            train: train.clone(),
            seed,
            data_hash: ds.hash(),
            tickers: ds.market.tickers.clone(),
            features: ds.market.features.clone(),
            macro_names: ds.macro_panel.names.clone(),
            scaler: ds.scaler.clone(),
            macro_mean: ds.macro_panel.mean.clone(),
            macro_scale: ds.macro_panel.scale.clone(),
            param_counts: model.parts().iter().map(|p| p.count()).collect(),
            params_sha256: String::new(),
        }
    }
}

fn blob(model: &GenModel) -> Vec<u8> {
    model.parts().iter().flat_map(|p| p.flat()).flat_map(|x| x.to_le_bytes()).collect()
}

/// Write `params.bin` and `manifest.json` into `dir`, creating it if needed.
pub fn save_checkpoint(dir: &Path, model: &GenModel, manifest: &GenManifest) -> Result<GenManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes = blob(model);
    let mut m = manifest.clone();
    m.phase = model.phase;
    m.dims = model.dims.clone();
    m.param_counts = model.parts().iter().map(|p| p.count()).collect();
    m.params_sha256 = hex::encode(Sha256::digest(&bytes));
    let pp = dir.join(PARAMS_FILE);
    std::fs::write(&pp, &bytes).map_err(|e| Error::io(&pp, e))?;
    let mp = dir.join(MANIFEST_FILE);
    std::fs::write(&mp, serde_json::to_vec_pretty(&m)?).map_err(|e| Error::io(&mp, e))?;
    Ok(m)
}

pub fn load_checkpoint(dir: &Path) -> Result<(GenModel, GenManifest)> {
    let mp = dir.join(MANIFEST_FILE);
    let manifest: GenManifest = serde_json::from_slice(&std::fs::read(&mp).map_err(|e| Error::io(&mp, e))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::InvalidInput(format!("unsupported checkpoint format {}", manifest.format_version)));
    }
    let pp = dir.join(PARAMS_FILE);
    let bytes = std::fs::read(&pp).map_err(|e| Error::io(&pp, e))?;
    if hex::encode(Sha256::digest(&bytes)) != manifest.params_sha256 {
        return Err(Error::InvalidInput(format!("{} does not match the manifest hash", pp.display())));
    }
    let mut model = GenModel::new(manifest.dims.clone(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
    let counts: Vec<usize> = model.parts().iter().map(|p| p.count()).collect();
    if counts != manifest.param_counts || bytes.len() != 8 * counts.iter().sum::<usize>() {
        return Err(Error::InvalidInput("parameter blob does not match the recorded architecture".into()));
    }
    let flat: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut off = 0;
    for (p, n) in model.parts_mut().into_iter().zip(counts) {
        p.set_flat(&flat[off..off + n]);
        off += n;
    }
    model.phase = manifest.phase;
    Ok((model, manifest))
}
