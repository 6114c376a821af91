use std::collections::BTreeSet;

use chrono::NaiveDate;

use super::types::{IngestLog, MacroPanel, MarketTensor, OhlcvFrame, OhlcvRow, FEATURE_NAMES, N_FEATURES};
use crate::error::{Error, Result};

/// The five model features of one bar, each with its own validity flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureRow {
    pub values: [f64; N_FEATURES],
    pub mask: [bool; N_FEATURES],
}

impl FeatureRow {
    pub fn missing() -> Self {
        Self { values: [0.0; N_FEATURES], mask: [false; N_FEATURES] }
    }

    pub fn get(&self, f: usize) -> Option<f64> {
        self.mask[f].then_some(self.values[f])
    }
}

/// Bar to `(open-to-close, close-to-close, low/close, high/close, ln(close * volume))`.
///
/// An invalid bar masks the whole row and is noted in `log`. The close-to-close return needs a
/// positive previous close and the dollar-volume feature needs positive volume.
pub fn transform_features(raw: &OhlcvRow, prev_close: Option<f64>, log: &mut IngestLog) -> FeatureRow {
    if !raw.is_valid() {
        log.note(format!("{}: invalid bar (non-positive price, negative volume or broken range); row masked", raw.date));
        return FeatureRow::missing();
    }
    let mut row = FeatureRow::missing();
    let mut put = |f: usize, v: f64| {
        if v.is_finite() {
            row.values[f] = v;
            row.mask[f] = true;
        }
    };
    put(0, raw.close / raw.open - 1.0);
    if let Some(pc) = prev_close.filter(|p| *p > 0.0 && p.is_finite()) {
        put(1, raw.close / pc - 1.0);
    }
    put(2, raw.low / raw.close);
    put(3, raw.high / raw.close);
    if raw.volume > 0.0 {
        put(4, (raw.close * raw.volume).ln());
    }
    row
}

/// Transform per-ticker bars onto the union trading calendar. Ticker-days without a bar stay
/// masked; the close-to-close return uses the ticker's previous valid close.
pub fn build_market_tensor(frames: &[OhlcvFrame], log: &mut IngestLog) -> Result<MarketTensor> {
    if frames.is_empty() {
        return Err(Error::NoData("no OHLCV frames".into()));
    }
    let calendar: BTreeSet<NaiveDate> = frames.iter().flat_map(|f| f.rows.iter().map(|r| r.date)).collect();
    let dates: Vec<NaiveDate> = calendar.into_iter().collect();
    let mut tensor = MarketTensor::new(
        dates.clone(),
        frames.iter().map(|f| f.ticker.clone()).collect(),
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    );
    for (i, frame) in frames.iter().enumerate() {
        if frame.rows.windows(2).any(|w| w[0].date >= w[1].date) {
            return Err(Error::InvalidInput(format!("{}: dates are not strictly increasing", frame.ticker)));
        }
        let mut prev_close: Option<f64> = None;
        for row in &frame.rows {
            let t = dates.binary_search(&row.date).expect("date is in the union calendar");
            let feats = transform_features(row, prev_close, log);
            for f in 0..N_FEATURES {
                if let Some(v) = feats.get(f) {
                    tensor.set(t, i, f, v);
                }
            }
            if row.is_valid() {
                prev_close = Some(row.close);
            }
        }
    }
    Ok(tensor)
}

/// Raw macro readings at publication dates (missing cells are `None`).
#[derive(Clone, Debug, PartialEq)]
pub struct MacroSeries {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

/// Forward-fill publications onto trading days: every day carries the latest reading published
/// on or before it. Days before the first reading stay masked.
pub fn align_macro(series: &MacroSeries, trading_dates: &[NaiveDate]) -> Result<MacroPanel> {
    if series.dates.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("macro dates are not sorted".into()));
    }
    let m = series.names.len();
    let mut values = vec![0.0; trading_dates.len() * m];
    let mut mask = vec![false; trading_dates.len() * m];
    let mut last: Vec<Option<f64>> = vec![None; m];
    let mut cursor = 0;
    for (t, day) in trading_dates.iter().enumerate() {
        while cursor < series.dates.len() && series.dates[cursor] <= *day {
            for (k, v) in series.rows[cursor].iter().enumerate() {
                if let Some(v) = v.filter(|v| v.is_finite()) {
                    last[k] = Some(v);
                }
            }
            cursor += 1;
        }
        for k in 0..m {
            if let Some(v) = last[k] {
                values[t * m + k] = v;
                mask[t * m + k] = true;
            }
        }
    }
    MacroPanel::new(trading_dates.to_vec(), series.names.clone(), values, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bar(o: f64, h: f64, l: f64, c: f64, v: f64) -> OhlcvRow {
        OhlcvRow { date: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(), open: o, high: h, low: l, close: c, volume: v }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn transform_direct_formula() {
        let mut log = IngestLog::default();
        let r = transform_features(&bar(100.0, 105.0, 95.0, 102.0, 1e6), Some(100.0), &mut log);
        assert!(close(r.values[0], 0.02));
        assert!(close(r.values[1], 0.02));
        assert!(close(r.values[2], 95.0 / 102.0));
        assert!(close(r.values[3], 105.0 / 102.0));
        assert!(close(r.values[4], (1.02e8f64).ln()));
        assert!((r.values[4] - 18.4405).abs() < 1e-4);
        assert!(r.mask.iter().all(|m| *m));
        assert!(log.is_empty());
    }

    #[test]
    fn transform_flat_bar() {
        let mut log = IngestLog::default();
        let r = transform_features(&bar(100.0, 100.0, 100.0, 100.0, 1.0), Some(100.0), &mut log);
        assert_eq!(r.values[..4], [0.0, 0.0, 1.0, 1.0]);
        assert!(close(r.values[4], 100f64.ln()));
    }

    #[test]
    fn zero_volume_masks_dollar_volume_only() {
        let mut log = IngestLog::default();
        let r = transform_features(&bar(100.0, 101.0, 99.0, 100.0, 0.0), Some(100.0), &mut log);
        assert_eq!(r.values[..4], [0.0, 0.0, 0.99, 1.01]);
        assert_eq!(r.mask, [true, true, true, true, false]);
    }

    #[test]
    fn non_positive_price_masks_row_and_logs() {
        let mut log = IngestLog::default();
        let r = transform_features(&bar(-1.0, 101.0, -2.0, 100.0, 10.0), Some(100.0), &mut log);
        assert_eq!(r.mask, [false; 5]);
        assert_eq!(log.entries.len(), 1);
    }

    #[test]
    fn missing_prev_close_masks_cc_return() {
        let mut log = IngestLog::default();
        let r = transform_features(&bar(100.0, 101.0, 99.0, 100.0, 10.0), None, &mut log);
        assert!(!r.mask[1]);
        assert!(r.mask[0]);
    }

    #[test]
    fn forward_fill_carries_last_reading() {
        let d = |day| NaiveDate::from_ymd_opt(2020, 1, day).unwrap();
        let series = MacroSeries {
            dates: vec![d(2), d(6)],
            names: vec!["cpi".into()],
            rows: vec![vec![Some(1.0)], vec![Some(2.0)]],
        };
        let days = [d(1), d(2), d(3), d(6), d(7)];
        let panel = align_macro(&series, &days).unwrap();
        let got: Vec<Option<f64>> = panel.series(0);
        assert_eq!(got, vec![None, Some(1.0), Some(1.0), Some(2.0), Some(2.0)]);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn price_scale_shifts_only_dollar_volume(
            o in 1.0f64..200.0, c in 1.0f64..200.0, up in 0.0f64..0.1, dn in 0.0f64..0.1,
            v in 1.0f64..1e7, pc in 1.0f64..200.0, lambda in 0.01f64..100.0,
        ) {
            let hi = o.max(c) * (1.0 + up);
            let lo = o.min(c) * (1.0 - dn);
            let mut log = IngestLog::default();
            let a = transform_features(&bar(o, hi, lo, c, v), Some(pc), &mut log);
            let b = transform_features(&bar(o * lambda, hi * lambda, lo * lambda, c * lambda, v), Some(pc * lambda), &mut log);
            for f in 0..4 {
                prop_assert!((a.values[f] - b.values[f]).abs() < 1e-9);
            }
            prop_assert!((b.values[4] - a.values[4] - lambda.ln()).abs() < 1e-9);
        }
    }
}
