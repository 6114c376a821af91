use std::ops::Range;

use super::types::MarketTensor;
use crate::stats::pearson_pairwise;

/// Instrument-by-instrument correlation matrix for one feature.
pub type CorrMatrix = Vec<Vec<f64>>;

/// Pairwise-complete Pearson correlation between instruments, one matrix per feature, measured
/// over `range`. Undefined pairs get 0 and the diagonal is 1.
pub fn instrument_correlations(panel: &MarketTensor, range: Range<usize>) -> Vec<CorrMatrix> {
    let ni = panel.n_instruments();
    (0..panel.n_features())
        .map(|f| {
            let series: Vec<Vec<Option<f64>>> =
                (0..ni).map(|i| range.clone().map(|t| panel.get(t, i, f)).collect()).collect();
            let mut c = vec![vec![0.0; ni]; ni];
            for a in 0..ni {
                c[a][a] = 1.0;
                for b in a + 1..ni {
                    let r = pearson_pairwise(&series[a], &series[b], 3).unwrap_or(0.0);
                    c[a][b] = r;
                    c[b][a] = r;
                }
            }
            c
        })
        .collect()
}

/// Fill every missing entry with the `exp(corr)`-weighted mean of the same feature on the other
/// instruments that are valid at that time. Entries with no valid peer are left missing, and
/// entries that were valid are passed through untouched.
pub fn impute_correlation_weighted(panel: &MarketTensor, corr: &[CorrMatrix]) -> MarketTensor {
    assert_eq!(corr.len(), panel.n_features(), "one correlation matrix per feature");
    let mut out = panel.clone();
    let ni = panel.n_instruments();
    for f in 0..panel.n_features() {
        for i in 0..ni {
            for t in 0..panel.n_time() {
                if panel.is_valid(t, i, f) {
                    continue;
                }
                let mut wsum = 0.0;
                let mut acc = 0.0;
                for j in (0..ni).filter(|&j| j != i) {
                    if let Some(v) = panel.get(t, j, f) {
                        let w = corr[f][i][j].exp();
                        wsum += w;
                        acc += w * v;
                    }
                }
                if wsum > 0.0 {
                    out.set(t, i, f, acc / wsum);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDate;

    use super::*;

    fn three_ticker() -> MarketTensor {
        let d = NaiveDate::from_ymd_opt(2020, 1, 2).unwrap();
        let mut p = MarketTensor::new(vec![d], vec!["A".into(), "B".into(), "C".into()], vec!["cc".into()]);
        p.set(0, 0, 0, 0.03);
        p.set(0, 1, 0, 0.00);
        p
    }

    fn corr_c() -> Vec<CorrMatrix> {
        let l2 = 2f64.ln();
        vec![vec![vec![1.0, 0.0, l2], vec![0.0, 1.0, 0.0], vec![l2, 0.0, 1.0]]]
    }

    #[test]
    fn weights_follow_exp_correlation() {
        let out = impute_correlation_weighted(&three_ticker(), &corr_c());
        assert!((out.get(0, 2, 0).unwrap() - 0.02).abs() < 1e-12);
        assert_eq!(out.get(0, 0, 0), Some(0.03));
        assert_eq!(out.get(0, 1, 0), Some(0.0));
    }

    #[test]
    fn single_neighbour_is_copied() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 2).unwrap();
        let mut p = MarketTensor::new(vec![d], vec!["A".into(), "B".into()], vec!["cc".into()]);
        p.set(0, 0, 0, 0.05);
        let corr = vec![vec![vec![1.0, -0.7], vec![-0.7, 1.0]]];
        let out = impute_correlation_weighted(&p, &corr);
        assert!((out.get(0, 1, 0).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn no_valid_neighbour_stays_missing() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 2).unwrap();
        let p = MarketTensor::new(vec![d], vec!["A".into(), "B".into()], vec!["cc".into()]);
        let corr = vec![vec![vec![1.0, 0.5], vec![0.5, 1.0]]];
        let out = impute_correlation_weighted(&p, &corr);
        assert!(!out.is_valid(0, 0, 0));
        assert!(!out.is_valid(0, 1, 0));
    }
}
