use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::DqnConfig;
use crate::dataio::{SplitSpec, WindowSpec};
use crate::error::{Error, Result};
use crate::evalkit::TsneConfig;
use crate::genmodel::{GenTrainConfig, PhaseSet};
use crate::market_env::EnvConfig;
use crate::nfsp::NfspConfig;

/// Only this variable overrides the configuration file: it replaces `data.root`.
pub const DATA_ROOT_ENV: &str = "BRT_DATA_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Relative paths resolve against the directory holding the config file.
    #[serde(default = "dot")]
    pub root: PathBuf,
    /// Directory of `<TICKER>.csv` files, relative to `root`.
    #[serde(default = "ohlcv_dir")]
    pub ohlcv_dir: PathBuf,
    /// Tickers to load; empty loads every CSV in `ohlcv_dir` in name order.
    #[serde(default)]
    pub tickers: Vec<String>,
    #[serde(default = "macro_csv")]
    pub macro_csv: PathBuf,
}

fn dot() -> PathBuf {
    PathBuf::from(".")
}
fn ohlcv_dir() -> PathBuf {
    PathBuf::from("ohlcv")
}
fn macro_csv() -> PathBuf {
    PathBuf::from("macro.csv")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub tau_corr: f64,
    pub tau_red: f64,
    pub target_horizon: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { tau_corr: 0.05, tau_red: 0.9, target_horizon: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub latent: usize,
    pub noise: usize,
    pub hidden: usize,
    /// Comma list of `ae`, `forecast`, `gan`.
    pub phases: String,
    pub train: GenTrainConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { latent: 24, noise: 16, hidden: 64, phases: "ae,forecast,gan".into(), train: GenTrainConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Historical,
    Generative,
    MatrixGame,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub max_lag: usize,
    pub n_draws: usize,
    pub episodes: usize,
    /// Most recent days embedded by the drift diagnostic.
    pub tsne_max_days: usize,
    pub tsne: TsneConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { max_lag: 10, n_draws: 1, episodes: 1, tsne_max_days: 400, tsne: TsneConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Artifact directory, relative to the config file.
    #[serde(default = "out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "backend")]
    pub backend: Backend,
    pub data: DataConfig,
    pub split: SplitSpec,
    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub nfsp: NfspConfig,
    #[serde(default)]
    pub dqn: DqnConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn out_dir() -> PathBuf {
    PathBuf::from("run")
}
fn backend() -> Backend {
    Backend::Generative
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read, validate and resolve paths; `data.root` may be replaced from the environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| cfg.data.root.clone());
        cfg.data.root = base.join(root);
        cfg.out_dir = base.join(&cfg.out_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        WindowSpec::new(self.window.length)?;
        PhaseSet::parse(&self.generator.phases)?;
        self.generator.train.weights.validate()?;
        self.nfsp.validate()?;
        if self.generator.latent == 0 || self.generator.noise == 0 || self.generator.hidden == 0 {
            return Err(Error::Config("generator sizes must be positive".into()));
        }
        if self.eval.n_draws == 0 || self.eval.episodes == 0 || self.eval.max_lag == 0 {
            return Err(Error::Config("evaluation counts must be positive".into()));
        }
        Ok(())
    }

    /// Hash of the canonical JSON encoding with machine-specific paths blanked.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.data.root = PathBuf::new();
        c.out_dir = PathBuf::new();
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serialises")))
    }

    pub fn ohlcv_dir(&self) -> PathBuf {
        self.data.root.join(&self.data.ohlcv_dir)
    }

    pub fn macro_path(&self) -> PathBuf {
        self.data.root.join(&self.data.macro_csv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"
[data]
[split]
train_end = "2001-01-01"
valid_end = "2001-06-01"
test_end = "2002-01-01"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::parse(MIN).unwrap();
        assert_eq!(c.window.length, 21);
        assert_eq!(c.nfsp.eta, 0.1);
        assert_eq!(c.backend, Backend::Generative);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse(&format!("{MIN}\n[env]\nfee = 0.0\nfees = 1.0\n")).is_err());
        assert!(ExperimentConfig::parse(&format!("bogus = 1\n{MIN}")).is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let bad = MIN.replace("2001-06-01", "2000-06-01");
        assert!(matches!(ExperimentConfig::parse(&bad), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse(&format!("{MIN}\n[nfsp]\neta = 2.0\n")), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_paths() {
        let a = ExperimentConfig::parse(MIN).unwrap();
        let mut b = a.clone();
        b.data.root = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 9;
        assert_ne!(a.hash(), b.hash());
    }
}
