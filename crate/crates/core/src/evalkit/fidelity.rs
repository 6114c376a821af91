use serde::{Deserialize, Serialize};

use crate::dataio::{MacroPanel, MarketTensor};
use crate::error::{Error, Result};
use crate::stats::{acf, leverage, pearson};

/// Mean absolute correlation gaps between real and synthetic panels. A category with no
/// usable pair is `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrDiffs {
    pub feature_macro: Option<f64>,
    pub inter_instrument: Option<f64>,
    pub inter_feature: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StylizedDiffs {
    pub acf_returns: f64,
    pub acf_abs_returns: f64,
    pub leverage: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenEvalReport {
    pub corr_diff_feature_macro: Option<f64>,
    pub corr_diff_inter_instrument: Option<f64>,
    pub corr_diff_inter_feature: Option<f64>,
    pub acf_returns_diff: f64,
    pub acf_absreturns_diff: f64,
    pub leverage_diff: f64,
}

/// Gap of one pair: both correlations measured on positions where all four series are valid.
fn pair_gap(ra: &[Option<f64>], rb: &[Option<f64>], sa: &[Option<f64>], sb: &[Option<f64>]) -> Option<f64> {
    let mut x = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for t in 0..ra.len() {
        if let (Some(a), Some(b), Some(c), Some(d)) = (ra[t], rb[t], sa[t], sb[t]) {
            x.0.push(a);
            x.1.push(b);
            x.2.push(c);
            x.3.push(d);
        }
    }
    if x.0.len() < 3 {
        return None;
    }
    Some((pearson(&x.0, &x.1)? - pearson(&x.2, &x.3)?).abs())
}

fn mean_of(gaps: Vec<Option<f64>>, what: &str) -> Option<f64> {
    let skipped = gaps.iter().filter(|g| g.is_none()).count();
    if skipped > 0 {
        log::info!("{what}: {skipped} pair(s) skipped (fewer than 3 overlapping points or constant)");
    }
    let kept: Vec<f64> = gaps.into_iter().flatten().collect();
    (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Feature-macro, inter-instrument and inter-feature correlation gaps. `synth` must share the
/// real panel's calendar, instruments and features; the macro panel is the same for both sides.
pub fn correlation_diffs(real: &MarketTensor, macro_panel: &MacroPanel, synth: &MarketTensor) -> Result<CorrDiffs> {
    if real.n_time() != synth.n_time() || real.n_instruments() != synth.n_instruments() || real.n_features() != synth.n_features() {
        return Err(Error::Shape("real and synthetic panels differ in shape".into()));
    }
    if macro_panel.n_time() != real.n_time() {
        return Err(Error::MisalignedPanels("macro panel does not span the real panel".into()));
    }
    let (ni, nf) = (real.n_instruments(), real.n_features());
    let rs: Vec<Vec<Vec<Option<f64>>>> = (0..ni).map(|i| (0..nf).map(|f| real.series(i, f)).collect()).collect();
    let ss: Vec<Vec<Vec<Option<f64>>>> = (0..ni).map(|i| (0..nf).map(|f| synth.series(i, f)).collect()).collect();
    let macros: Vec<Vec<Option<f64>>> = (0..macro_panel.n_indicators()).map(|m| macro_panel.series(m)).collect();

    let mut fm = Vec::new();
    for i in 0..ni {
        for f in 0..nf {
            for m in &macros {
                fm.push(pair_gap(&rs[i][f], m, &ss[i][f], m));
            }
        }
    }
    let mut ii = Vec::new();
    for f in 0..nf {
        for a in 0..ni {
            for b in a + 1..ni {
                ii.push(pair_gap(&rs[a][f], &rs[b][f], &ss[a][f], &ss[b][f]));
            }
        }
    }
    let mut ff = Vec::new();
    for i in 0..ni {
        for a in 0..nf {
            for b in a + 1..nf {
                ff.push(pair_gap(&rs[i][a], &rs[i][b], &ss[i][a], &ss[i][b]));
            }
        }
    }
    Ok(CorrDiffs {
        feature_macro: mean_of(fm, "feature-macro"),
        inter_instrument: mean_of(ii, "inter-instrument"),
        inter_feature: mean_of(ff, "inter-feature"),
    })
}

fn lagged_gap(real: &[f64], synth: &[f64], max_lag: usize, stat: impl Fn(&[f64], usize) -> Option<f64>) -> Result<f64> {
    let mut total = 0.0;
    for lag in 1..=max_lag {
        let r = stat(real, lag).ok_or_else(|| Error::DegenerateSeries("real series is constant".into()))?;
        let s = stat(synth, lag).ok_or_else(|| Error::DegenerateSeries("synthetic series is constant".into()))?;
        total += (r - s).abs();
    }
    Ok(total / max_lag as f64)
}

/// Mean over lags `1..=max_lag` of the gaps in return ACF, absolute-return ACF and leverage.
pub fn stylized_fact_diffs(real: &[f64], synth: &[f64], max_lag: usize) -> Result<StylizedDiffs> {
    if max_lag == 0 {
        return Err(Error::InvalidInput("max_lag must be at least 1".into()));
    }
    if real.len() <= max_lag + 2 || synth.len() <= max_lag + 2 {
        return Err(Error::InvalidInput(format!("series must be longer than max_lag + 2 = {}", max_lag + 2)));
    }
    let abs = |x: &[f64]| x.iter().map(|v| v.abs()).collect::<Vec<_>>();
    Ok(StylizedDiffs {
        acf_returns: lagged_gap(real, synth, max_lag, acf)?,
        acf_abs_returns: lagged_gap(&abs(real), &abs(synth), max_lag, acf)?,
        leverage: lagged_gap(real, synth, max_lag, leverage)?,
    })
}

/// Longest run of consecutive days on which both series are valid.
fn common_run(a: &[Option<f64>], b: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    let mut best = (0, 0);
    let mut start = None;
    for t in 0..=a.len() {
        let ok = t < a.len() && a[t].is_some() && b[t].is_some();
        match (ok, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                if t - s > best.1 - best.0 {
                    best = (s, t);
                }
                start = None;
            }
            _ => {}
        }
    }
    (a[best.0..best.1].iter().map(|x| x.unwrap()).collect(), b[best.0..best.1].iter().map(|x| x.unwrap()).collect())
}

/// Full fidelity report; stylized facts use the given return feature, averaged over instruments.
pub fn evaluate_generator(real: &MarketTensor, macro_panel: &MacroPanel, synth: &MarketTensor, return_feature: usize, max_lag: usize) -> Result<GenEvalReport> {
    let c = correlation_diffs(real, macro_panel, synth)?;
    let ni = real.n_instruments();
    let mut acc = StylizedDiffs::default();
    for i in 0..ni {
        let (r, s) = common_run(&real.series(i, return_feature), &synth.series(i, return_feature));
        let d = stylized_fact_diffs(&r, &s, max_lag)?;
        acc.acf_returns += d.acf_returns / ni as f64;
        acc.acf_abs_returns += d.acf_abs_returns / ni as f64;
        acc.leverage += d.leverage / ni as f64;
    }
    Ok(GenEvalReport {
        corr_diff_feature_macro: c.feature_macro,
        corr_diff_inter_instrument: c.inter_instrument,
        corr_diff_inter_feature: c.inter_feature,
        acf_returns_diff: acc.acf_returns,
        acf_absreturns_diff: acc.acf_abs_returns,
        leverage_diff: acc.leverage,
    })
}
