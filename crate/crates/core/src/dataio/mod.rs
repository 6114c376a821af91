//! Data ingestion: OHLCV and macro CSVs to an imputed, windowable feature panel.

mod csv_io;
mod features;
mod impute;
mod select;
mod synthetic;
mod types;
mod window;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use csv_io::{read_macro_csv, read_ohlcv_csv, write_macro_csv, write_ohlcv_csv};
pub use features::{align_macro, build_market_tensor, transform_features, FeatureRow, MacroSeries};
pub use impute::{impute_correlation_weighted, instrument_correlations, CorrMatrix};
pub use select::{select_features, Selection};
pub use synthetic::{business_days, make_synthetic_panel, GroundTruth, SyntheticMarket, SyntheticParams};
pub use types::{
    IngestLog, MacroPanel, MarketTensor, OhlcvFrame, OhlcvRow, Split, SplitRanges, SplitSpec, WindowSpec, CC_RETURN,
    FEATURE_NAMES, LOG_DOLLAR_VOLUME, N_FEATURES,
};
pub use window::{make_windows, WindowTriple};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub split: SplitSpec,
    pub window: WindowSpec,
    pub tau_corr: f64,
    pub tau_red: f64,
    /// Days ahead of the macro reading at which the selection target return is measured.
    pub target_horizon: usize,
}

/// Standardisation constants for every `(instrument, feature)` column, fit on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub n_features: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(panel: &MarketTensor, train: std::ops::Range<usize>) -> Self {
        let (ni, nf) = (panel.n_instruments(), panel.n_features());
        let mut mean = Vec::with_capacity(ni * nf);
        let mut scale = Vec::with_capacity(ni * nf);
        for i in 0..ni {
            for f in 0..nf {
                let xs: Vec<f64> = train.clone().filter_map(|t| panel.get(t, i, f)).collect();
                let mu = crate::stats::mean(&xs);
                let sd = crate::stats::std_dev(&xs, 1);
                mean.push(if mu.is_finite() { mu } else { 0.0 });
                scale.push(if sd.is_finite() && sd > 1e-12 { sd } else { 1.0 });
            }
        }
        Self { n_features: nf, mean, scale }
    }

    pub fn forward(&self, i: usize, f: usize, v: f64) -> f64 {
        let k = i * self.n_features + f;
        (v - self.mean[k]) / self.scale[k]
    }

    pub fn inverse(&self, i: usize, f: usize, z: f64) -> f64 {
        let k = i * self.n_features + f;
        z * self.scale[k] + self.mean[k]
    }
}

/// Output of ingestion: the imputed market panel and the selected, standardised macro panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub market: MarketTensor,
    pub macro_panel: MacroPanel,
    pub splits: SplitRanges,
    pub window: WindowSpec,
    pub scaler: FeatureScaler,
    pub candidate_names: Vec<String>,
    pub selection: Selection,
    pub log: IngestLog,
}

impl Dataset {
    pub fn windows(&self, split: Split) -> Result<Vec<WindowTriple>> {
        make_windows(&self.market, &self.macro_panel, self.window, self.splits.get(split))
    }

    /// Content hash of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("dataset serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Mean close-to-close return across instruments at each day, `None` where all are missing.
    pub fn mean_cc_return(&self) -> Vec<Option<f64>> {
        (0..self.market.n_time())
            .map(|t| {
                let xs: Vec<f64> = (0..self.market.n_instruments()).filter_map(|i| self.market.get(t, i, CC_RETURN)).collect();
                (!xs.is_empty()).then(|| crate::stats::mean(&xs))
            })
            .collect()
    }
}

/// Build features, impute gaps, select macro indicators and fit scalers.
///
/// Imputation correlations, macro selection and all scaling constants use the training split
/// only. When no indicator clears both thresholds the single most target-correlated one is kept
/// so the generator always has a conditioning signal.
pub fn ingest(frames: &[OhlcvFrame], macro_series: &MacroSeries, opts: &IngestOptions) -> Result<Dataset> {
    if !(0.0..1.0).contains(&opts.tau_corr) || !(0.0..1.0).contains(&opts.tau_red) || opts.tau_corr == 0.0 || opts.tau_red == 0.0 {
        return Err(Error::Config("selection thresholds must lie in (0, 1)".into()));
    }
    let mut log = IngestLog::default();
    let raw = build_market_tensor(frames, &mut log)?;
    let splits = opts.split.ranges(&raw.dates)?;
    if splits.train.is_empty() {
        return Err(Error::NoData("training split is empty".into()));
    }
    let corr = instrument_correlations(&raw, splits.train.clone());
    let market = impute_correlation_weighted(&raw, &corr);
    let filled = market.valid_count() - raw.valid_count();
    if filled > 0 {
        log.note(format!("imputed {filled} missing entries from correlated instruments"));
    }
    let mut full_macro = align_macro(macro_series, &market.dates)?;

    let mut tmp = Dataset {
        market,
        macro_panel: full_macro.clone(),
        splits: splits.clone(),
        window: opts.window,
        scaler: FeatureScaler { n_features: 0, mean: vec![], scale: vec![] },
        candidate_names: full_macro.names.clone(),
        selection: Selection::default(),
        log: IngestLog::default(),
    };
    let mean_ret = tmp.mean_cc_return();
    let h = opts.target_horizon;
    let train = splits.train.clone();
    let target: Vec<Option<f64>> = train.clone().map(|t| mean_ret.get(t + h).copied().flatten()).collect();
    let cands: Vec<Vec<Option<f64>>> =
        (0..full_macro.n_indicators()).map(|m| train.clone().map(|t| full_macro.get(t, m)).collect()).collect();
    let mut selection = select_features(&cands, &target, opts.tau_corr, opts.tau_red);
    for &u in &selection.undefined {
        log.note(format!("macro indicator {} has undefined correlation with the target; dropped", full_macro.names[u]));
    }
    if selection.selected.is_empty() {
        let best = (0..cands.len())
            .filter_map(|k| crate::stats::pearson_pairwise(&cands[k], &target, 3).map(|r| (k, r.abs())))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
            .ok_or_else(|| Error::NoData("no usable macro indicator".into()))?;
        log.note(format!("no macro indicator passed selection; keeping {}", full_macro.names[best]));
        selection.selected.push(best);
    }
    let degenerate = full_macro.fit_scaling(train.clone());
    for d in degenerate.iter().filter(|d| selection.selected.contains(d)) {
        log.note(format!("macro indicator {} is constant on the training split", full_macro.names[*d]));
    }
    tmp.macro_panel = full_macro.select(&selection.selected);
    tmp.scaler = FeatureScaler::fit(&tmp.market, train);
    tmp.selection = selection;
    log.entries.splice(0..0, std::mem::take(&mut tmp.log.entries));
    tmp.log = log;
    Ok(tmp)
}
