//! Ground-truth fixture markets.
//!
//! Returns follow a macro-driven AR(1): `r[t,i] = a[i] m[t] + b[i] r[t-1,i] + sigma[i] xi[t,i]`
//! where the driver `m` is itself AR(1) and the innovations `xi` are equicorrelated across
//! instruments. Every second-order statistic of the return process is available in closed form
//! from [`GroundTruth`].

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::{build_market_tensor, MacroSeries};
use super::types::{IngestLog, MacroPanel, MarketTensor, OhlcvFrame, OhlcvRow};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    /// Loading of each instrument's return on the macro driver.
    pub a: Vec<f64>,
    /// Own-lag AR coefficient per instrument.
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Correlation of the return innovations across instruments.
    pub innovation_corr: f64,
    pub macro_phi: f64,
    pub macro_sigma: f64,
    /// AR coefficient of the non-driving macro indicators.
    pub nuisance_phi: f64,
    pub start_price: f64,
    pub log_dollar_volume: f64,
    /// Probability that a ticker-day bar is dropped (exercises imputation).
    pub missing_prob: f64,
    pub start_date: NaiveDate,
}

impl SyntheticParams {
    /// Instruments driven by a shared macro factor with moderate own-lag persistence.
    pub fn macro_driven(n_instruments: usize) -> Self {
        Self {
            a: vec![0.004; n_instruments],
            b: (0..n_instruments).map(|i| 0.3 - 0.1 * (i % 2) as f64).collect(),
            sigma: vec![0.01; n_instruments],
            innovation_corr: 0.3,
            macro_phi: 0.95,
            macro_sigma: 0.3,
            nuisance_phi: 0.9,
            start_price: 100.0,
            log_dollar_volume: 18.0,
            missing_prob: 0.0,
            start_date: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
        }
    }

    pub fn iid(n_instruments: usize) -> Self {
        Self { a: vec![0.0; n_instruments], b: vec![0.0; n_instruments], innovation_corr: 0.0, ..Self::macro_driven(n_instruments) }
    }

    fn validate(&self) -> Result<()> {
        let n = self.a.len();
        if self.b.len() != n || self.sigma.len() != n || n == 0 {
            return Err(Error::Config("a, b and sigma must have one entry per instrument".into()));
        }
        if self.b.iter().any(|b| b.abs() >= 1.0) || self.macro_phi.abs() >= 1.0 || self.nuisance_phi.abs() >= 1.0 {
            return Err(Error::Config("AR coefficients must satisfy |b| < 1 (non-stationary process rejected)".into()));
        }
        if !(0.0..1.0).contains(&self.innovation_corr) {
            return Err(Error::Config("innovation correlation must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.missing_prob) {
            return Err(Error::Config("missing probability must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Closed-form second moments of the fixture return process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub params: SyntheticParams,
    /// Index of the driving indicator in the macro panel.
    pub driver: usize,
}

impl GroundTruth {
    pub fn macro_variance(&self) -> f64 {
        let p = &self.params;
        p.macro_sigma * p.macro_sigma / (1.0 - p.macro_phi * p.macro_phi)
    }

    /// `Cov(r[t,i], r[t-lag,j])`.
    pub fn return_cross_cov(&self, i: usize, j: usize, lag: usize) -> f64 {
        let p = &self.params;
        let (bi, bj, phi) = (p.b[i], p.b[j], p.macro_phi);
        // macro part: a_i a_j V_m sum_{k,l} bi^k bj^l phi^|lag + k - l|
        let terms = |b: f64| if b == 0.0 { 1 } else { ((1e-17f64).ln() / b.abs().ln()).ceil() as usize + 1 };
        let (ki, kj) = (terms(bi), terms(bj));
        let mut s = 0.0;
        for k in 0..ki {
            for l in 0..kj {
                let d = (lag as i64 + k as i64 - l as i64).unsigned_abs() as i32;
                s += bi.powi(k as i32) * bj.powi(l as i32) * phi.powi(d);
            }
        }
        let macro_part = p.a[i] * p.a[j] * self.macro_variance() * s;
        let rho = if i == j { 1.0 } else { p.innovation_corr };
        // innovation part: sigma_i sigma_j rho sum_l bi^(lag+l) bj^l
        let noise_part = p.sigma[i] * p.sigma[j] * rho * bi.powi(lag as i32) / (1.0 - bi * bj);
        macro_part + noise_part
    }

    pub fn return_corr(&self, i: usize, j: usize) -> f64 {
        self.return_cross_cov(i, j, 0) / (self.return_cross_cov(i, i, 0) * self.return_cross_cov(j, j, 0)).sqrt()
    }

    pub fn return_acf(&self, i: usize, lag: usize) -> f64 {
        self.return_cross_cov(i, i, lag) / self.return_cross_cov(i, i, 0)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticMarket {
    pub frames: Vec<OhlcvFrame>,
    pub macro_series: MacroSeries,
    pub market: MarketTensor,
    pub macro_panel: MacroPanel,
    /// Close-to-close returns as simulated, `returns[t][i]` (includes dropped bars).
    pub returns: Vec<Vec<f64>>,
    pub truth: GroundTruth,
}

/// Business days (Mon-Fri) starting at `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Simulate `n_days` of bars for `params.a.len()` instruments plus `n_macro` indicators
/// (indicator 0 drives returns, the rest are AR(1) nuisance series).
pub fn make_synthetic_panel(rng: &mut impl Rng, n_days: usize, n_macro: usize, params: &SyntheticParams) -> Result<SyntheticMarket> {
    params.validate()?;
    if n_macro == 0 || n_days < 2 {
        return Err(Error::Config("need at least one macro indicator and two days".into()));
    }
    let ni = params.a.len();
    let dates = business_days(params.start_date, n_days);
    let mut std_normal = || -> f64 { StandardNormal.sample(rng) };

    let stat_sd = |phi: f64, sig: f64| sig / (1.0 - phi * phi).sqrt();
    let mut m: Vec<f64> = (0..n_macro)
        .map(|k| {
            let phi = if k == 0 { params.macro_phi } else { params.nuisance_phi };
            stat_sd(phi, params.macro_sigma) * std_normal()
        })
        .collect();
    let mut r_prev = vec![0.0; ni];
    let mut price = vec![params.start_price; ni];
    let mut returns = Vec::with_capacity(n_days);
    let mut macro_rows = Vec::with_capacity(n_days);
    let mut bars: Vec<Vec<Option<OhlcvRow>>> = vec![Vec::with_capacity(n_days); ni];
    let rho = params.innovation_corr;
    let mut draws = Vec::with_capacity(n_days);
    for _ in 0..n_days {
        // macro step first: m_t drives r_t
        for (k, mk) in m.iter_mut().enumerate() {
            let phi = if k == 0 { params.macro_phi } else { params.nuisance_phi };
            *mk = phi * *mk + params.macro_sigma * std_normal();
        }
        let common = std_normal();
        let mut row = Vec::with_capacity(ni);
        let mut per = Vec::with_capacity(ni);
        for i in 0..ni {
            let xi = rho.sqrt() * common + (1.0 - rho).sqrt() * std_normal();
            let r = params.a[i] * m[0] + params.b[i] * r_prev[i] + params.sigma[i] * xi;
            row.push(r);
            per.push((std_normal(), std_normal(), std_normal(), std_normal()));
        }
        r_prev.clone_from(&row);
        returns.push(row);
        macro_rows.push(m.iter().copied().map(Some).collect::<Vec<_>>());
        draws.push(per);
    }
    let mut drop_rng = |p: f64| p > 0.0 && rng.random::<f64>() < p;
    for (t, day) in dates.iter().enumerate() {
        for i in 0..ni {
            let prev = price[i];
            let close = prev * (1.0 + returns[t][i]);
            price[i] = close;
            let (zg, zh, zl, zv) = draws[t][i];
            let s = params.sigma[i];
            let open = prev * (1.0 + 0.2 * s * zg);
            let high = open.max(close) * (1.0 + 0.3 * s * zh.abs());
            let low = open.min(close) * (1.0 - 0.3 * s * zl.abs());
            let dollar = (params.log_dollar_volume + 0.3 * zv).exp();
            let bar = OhlcvRow { date: *day, open, high, low, close, volume: dollar / close };
            // keep the first bar so every ticker has a starting close
            let keep = t == 0 || !drop_rng(params.missing_prob);
            bars[i].push(keep.then_some(bar));
        }
    }
    let tickers: Vec<String> = (0..ni).map(|i| format!("SYN{i}")).collect();
    let frames: Vec<OhlcvFrame> = bars
        .into_iter()
        .zip(&tickers)
        .map(|(rows, t)| OhlcvFrame { ticker: t.clone(), rows: rows.into_iter().flatten().collect() })
        .collect();
    let names: Vec<String> = (0..n_macro).map(|k| if k == 0 { "driver".to_string() } else { format!("nuisance{k}") }).collect();
    let macro_series = MacroSeries { dates: dates.clone(), names: names.clone(), rows: macro_rows };
    let mut log = IngestLog::default();
    let market = build_market_tensor(&frames, &mut log)?;
    let macro_panel = super::features::align_macro(&macro_series, &market.dates)?;
    Ok(SyntheticMarket {
        frames,
        macro_series,
        market,
        macro_panel,
        returns,
        truth: GroundTruth { params: params.clone(), driver: 0 },
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::stats::{acf, pearson};

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn col(ret: &[Vec<f64>], i: usize) -> Vec<f64> {
        ret.iter().map(|r| r[i]).collect()
    }

    #[test]
    fn deterministic_under_seed() {
        let p = SyntheticParams::macro_driven(2);
        let a = make_synthetic_panel(&mut rng(1), 300, 2, &p).unwrap();
        let b = make_synthetic_panel(&mut rng(1), 300, 2, &p).unwrap();
        assert_eq!(a.market, b.market);
        assert_eq!(a.returns, b.returns);
    }

    #[test]
    fn non_stationary_rejected() {
        let mut p = SyntheticParams::macro_driven(1);
        p.b[0] = 1.0;
        assert!(make_synthetic_panel(&mut rng(1), 100, 1, &p).is_err());
    }

    #[test]
    fn iid_returns_have_no_autocorrelation() {
        let t = 4000;
        let m = make_synthetic_panel(&mut rng(2), t, 1, &SyntheticParams::iid(1)).unwrap();
        let band = 2.0 / (t as f64).sqrt();
        for lag in 1..=5 {
            assert!(acf(&col(&m.returns, 0), lag).unwrap().abs() < 1.5 * band);
        }
    }

    #[test]
    fn ar1_acf_matches_closed_form() {
        let mut p = SyntheticParams::iid(1);
        p.b = vec![0.5];
        let m = make_synthetic_panel(&mut rng(3), 20_000, 1, &p).unwrap();
        assert!((m.truth.return_acf(0, 1) - 0.5).abs() < 1e-12);
        assert!((acf(&col(&m.returns, 0), 1).unwrap() - 0.5).abs() < 0.03);
    }

    #[test]
    fn shared_macro_drives_cross_correlation() {
        let mut p = SyntheticParams::macro_driven(2);
        p.a = vec![0.02, 0.02];
        p.innovation_corr = 0.0;
        let m = make_synthetic_panel(&mut rng(4), 20_000, 1, &p).unwrap();
        let truth = m.truth.return_corr(0, 1);
        assert!(truth > 0.8, "closed-form correlation {truth}");
        let emp = pearson(&col(&m.returns, 0), &col(&m.returns, 1)).unwrap();
        assert!((emp - truth).abs() < 0.05, "empirical {emp} vs closed form {truth}");
    }

    #[test]
    fn bars_are_consistent_and_features_recover_returns() {
        let m = make_synthetic_panel(&mut rng(5), 200, 1, &SyntheticParams::macro_driven(2)).unwrap();
        for f in &m.frames {
            assert!(f.rows.iter().all(OhlcvRow::is_valid));
        }
        for t in 1..200 {
            let cc = m.market.get(t, 1, super::super::types::CC_RETURN).unwrap();
            assert!((cc - m.returns[t][1]).abs() < 1e-10);
        }
    }
}
