use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_NAMES: [&str; 5] = ["oc_return", "cc_return", "low_close", "high_close", "log_dollar_volume"];
pub const N_FEATURES: usize = 5;
pub const CC_RETURN: usize = 1;
pub const LOG_DOLLAR_VOLUME: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OhlcvRow {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl OhlcvRow {
    pub fn is_valid(&self) -> bool {
        let prices = [self.open, self.high, self.low, self.close];
        prices.iter().all(|p| p.is_finite() && *p > 0.0)
            && self.volume.is_finite()
            && self.volume >= 0.0
            && self.low <= self.open.min(self.close)
            && self.open.max(self.close) <= self.high
    }
}

/// Daily bars for one ticker, dates strictly increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OhlcvFrame {
    pub ticker: String,
    pub rows: Vec<OhlcvRow>,
}

/// `(time x instrument x feature)` values with a validity mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketTensor {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub features: Vec<String>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl MarketTensor {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, features: Vec<String>) -> Self {
        let n = dates.len() * tickers.len() * features.len();
        Self { dates, tickers, features, values: vec![0.0; n], mask: vec![false; n] }
    }

    pub fn from_parts(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        features: Vec<String>,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let n = dates.len() * tickers.len() * features.len();
        if values.len() != n || mask.len() != n {
            return Err(Error::Shape(format!("expected {n} entries, got {} values / {} mask", values.len(), mask.len())));
        }
        if values.iter().zip(&mask).any(|(v, m)| *m && !v.is_finite()) {
            return Err(Error::NonFinite("valid market entry is not finite".into()));
        }
        Ok(Self { dates, tickers, features, values, mask })
    }

    pub fn n_time(&self) -> usize {
        self.dates.len()
    }

    pub fn n_instruments(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    #[inline]
    pub fn index(&self, t: usize, i: usize, f: usize) -> usize {
        (t * self.tickers.len() + i) * self.features.len() + f
    }

    pub fn get(&self, t: usize, i: usize, f: usize) -> Option<f64> {
        let k = self.index(t, i, f);
        self.mask[k].then_some(self.values[k])
    }

    pub fn raw(&self, t: usize, i: usize, f: usize) -> f64 {
        self.values[self.index(t, i, f)]
    }

    pub fn is_valid(&self, t: usize, i: usize, f: usize) -> bool {
        self.mask[self.index(t, i, f)]
    }

    pub fn set(&mut self, t: usize, i: usize, f: usize, v: f64) {
        let k = self.index(t, i, f);
        self.values[k] = v;
        self.mask[k] = true;
    }

    pub fn set_missing(&mut self, t: usize, i: usize, f: usize) {
        let k = self.index(t, i, f);
        self.values[k] = 0.0;
        self.mask[k] = false;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// One feature of one instrument as an optional series.
    pub fn series(&self, i: usize, f: usize) -> Vec<Option<f64>> {
        (0..self.n_time()).map(|t| self.get(t, i, f)).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Contiguous time slice.
    pub fn slice_time(&self, range: Range<usize>) -> MarketTensor {
        let per = self.tickers.len() * self.features.len();
        Self {
            dates: self.dates[range.clone()].to_vec(),
            tickers: self.tickers.clone(),
            features: self.features.clone(),
            values: self.values[range.start * per..range.end * per].to_vec(),
            mask: self.mask[range.start * per..range.end * per].to_vec(),
        }
    }
}

/// Trading-day aligned macro indicators with training-split standardisation constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroPanel {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    values: Vec<f64>,
    mask: Vec<bool>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl MacroPanel {
    pub fn new(dates: Vec<NaiveDate>, names: Vec<String>, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        let n = dates.len() * names.len();
        if values.len() != n || mask.len() != n {
            return Err(Error::Shape(format!("macro panel expects {n} entries")));
        }
        let m = names.len();
        Ok(Self { dates, names, values, mask, mean: vec![0.0; m], scale: vec![1.0; m] })
    }

    pub fn n_time(&self) -> usize {
        self.dates.len()
    }

    pub fn n_indicators(&self) -> usize {
        self.names.len()
    }

    pub fn get(&self, t: usize, m: usize) -> Option<f64> {
        let k = t * self.names.len() + m;
        self.mask[k].then_some(self.values[k])
    }

    pub fn raw(&self, t: usize, m: usize) -> f64 {
        self.values[t * self.names.len() + m]
    }

    pub fn is_valid(&self, t: usize, m: usize) -> bool {
        self.mask[t * self.names.len() + m]
    }

    pub fn series(&self, m: usize) -> Vec<Option<f64>> {
        (0..self.n_time()).map(|t| self.get(t, m)).collect()
    }

    /// Standardised value; missing readings map to the training mean (zero).
    pub fn standardized(&self, t: usize, m: usize) -> f64 {
        match self.get(t, m) {
            Some(v) => (v - self.mean[m]) / self.scale[m],
            None => 0.0,
        }
    }

    /// Fit mean and standard deviation per indicator on `train`. Indicators that are constant or
    /// unobserved on the training range get scale 1 and are reported back.
    pub fn fit_scaling(&mut self, train: Range<usize>) -> Vec<usize> {
        let mut degenerate = Vec::new();
        for m in 0..self.n_indicators() {
            let xs: Vec<f64> = train.clone().filter_map(|t| self.get(t, m)).collect();
            let mu = crate::stats::mean(&xs);
            let sd = crate::stats::std_dev(&xs, 1);
            if xs.len() >= 2 && sd.is_finite() && sd > 0.0 {
                self.mean[m] = mu;
                self.scale[m] = sd;
            } else {
                self.mean[m] = if mu.is_finite() { mu } else { 0.0 };
                self.scale[m] = 1.0;
                degenerate.push(m);
            }
        }
        degenerate
    }

    pub fn slice_time(&self, range: Range<usize>) -> MacroPanel {
        let m = self.n_indicators();
        MacroPanel {
            dates: self.dates[range.clone()].to_vec(),
            names: self.names.clone(),
            values: self.values[range.start * m..range.end * m].to_vec(),
            mask: self.mask[range.start * m..range.end * m].to_vec(),
            mean: self.mean.clone(),
            scale: self.scale.clone(),
        }
    }

    /// Keep only the listed indicators, in the given order.
    pub fn select(&self, keep: &[usize]) -> MacroPanel {
        let m_old = self.n_indicators();
        let mut values = Vec::with_capacity(self.n_time() * keep.len());
        let mut mask = Vec::with_capacity(self.n_time() * keep.len());
        for t in 0..self.n_time() {
            for &m in keep {
                values.push(self.values[t * m_old + m]);
                mask.push(self.mask[t * m_old + m]);
            }
        }
        MacroPanel {
            dates: self.dates.clone(),
            names: keep.iter().map(|&m| self.names[m].clone()).collect(),
            values,
            mask,
            mean: keep.iter().map(|&m| self.mean[m]).collect(),
            scale: keep.iter().map(|&m| self.scale[m]).collect(),
        }
    }
}

/// Calendar boundaries of the train / validation / test splits (inclusive ends).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: NaiveDate,
    pub valid_end: NaiveDate,
    pub test_end: NaiveDate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl SplitRanges {
    pub fn get(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Valid => self.valid.clone(),
            Split::Test => self.test.clone(),
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_end < self.valid_end && self.valid_end < self.test_end {
            Ok(())
        } else {
            Err(Error::Config("split dates must satisfy train_end < valid_end < test_end".into()))
        }
    }

    pub fn ranges(&self, dates: &[NaiveDate]) -> Result<SplitRanges> {
        self.validate()?;
        let upto = |d: NaiveDate| dates.partition_point(|x| *x <= d);
        let (a, b, c) = (upto(self.train_end), upto(self.valid_end), upto(self.test_end));
        Ok(SplitRanges { train: 0..a, valid: a..b, test: b..c })
    }
}

/// Window length in trading days; macro windows span twice this.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { length: 21 }
    }
}

impl WindowSpec {
    pub fn new(length: usize) -> Result<Self> {
        if length < 2 {
            return Err(Error::Config("window length must be at least 2".into()));
        }
        Ok(Self { length })
    }

    pub fn macro_length(&self) -> usize {
        2 * self.length
    }
}

/// Record of recoverable problems met while ingesting data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestLog {
    pub entries: Vec<String>,
}

impl IngestLog {
    pub fn note(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.entries.push(msg);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
