use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trading days per year used to annualise returns.
pub const TRADING_DAYS: f64 = 252.0;

/// Annual return rate `(V_T - V_0) / V_0 * 252 / T`.
pub fn arr(net_values: &[f64], trading_days: usize) -> Result<f64> {
    let (first, last) = match (net_values.first(), net_values.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::InvalidInput("net value series is empty".into())),
    };
    if !(first > 0.0) {
        return Err(Error::InvalidInput("initial net value must be positive".into()));
    }
    if trading_days == 0 {
        return Err(Error::InvalidInput("trading_days must be at least 1".into()));
    }
    Ok((last - first) / first * TRADING_DAYS / trading_days as f64)
}

/// Per-period Sharpe ratio: sample mean over sample standard deviation (ddof 1), not annualised.
pub fn sharpe(returns: &[f64]) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::InvalidInput("Sharpe ratio needs at least two returns".into()));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(Error::DegenerateSeries("returns have zero variance".into()));
    }
    Ok(mean / var.sqrt())
}

/// Sharpe ratio scaled by `sqrt(252)`.
pub fn sharpe_annualized(returns: &[f64]) -> Result<f64> {
    Ok(sharpe(returns)? * TRADING_DAYS.sqrt())
}

/// Largest fractional decline from a running peak.
pub fn max_drawdown(net_values: &[f64]) -> Result<f64> {
    if net_values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("net values must be positive".into()));
    }
    let mut peak = f64::NEG_INFINITY;
    let mut mdd: f64 = 0.0;
    for &v in net_values {
        peak = peak.max(v);
        mdd = mdd.max((peak - v) / peak);
    }
    Ok(mdd)
}

/// Simple period returns `V_{t+1} / V_t - 1`.
pub fn period_returns(net_values: &[f64]) -> Vec<f64> {
    net_values.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub arr: f64,
    /// `None` when the return series has zero variance.
    pub sr: Option<f64>,
    pub mdd: f64,
    pub net_value_series: Vec<f64>,
    pub trade_count: usize,
}

impl BacktestReport {
    /// Metrics of a net-value series covering `net_values.len() - 1` trading days.
    pub fn from_net_values(net_values: Vec<f64>, trade_count: usize) -> Result<Self> {
        if net_values.len() < 2 {
            return Err(Error::InvalidInput("backtest needs at least one step".into()));
        }
        let days = net_values.len() - 1;
        let rets = period_returns(&net_values);
        let sr = match sharpe(&rets) {
            Ok(s) => Some(s),
            Err(Error::DegenerateSeries(_)) | Err(Error::InvalidInput(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { arr: arr(&net_values, days)?, sr, mdd: max_drawdown(&net_values)?, net_value_series: net_values, trade_count })
    }

    /// `ARR,SR,MDD` row; an undefined Sharpe ratio is left empty.
    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.arr, self.sr.map(|s| s.to_string()).unwrap_or_default(), self.mdd)
    }
}
