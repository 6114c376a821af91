use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days of history every indicator vector needs.
pub const INDICATOR_WINDOW: usize = 21;
pub const N_INDICATORS: usize = 7;
pub const INDICATOR_NAMES: [&str; N_INDICATORS] = ["ret_1", "ret_5", "ret_21", "ma_5_gap", "ma_21_gap", "std_21", "volume_z"];

/// Technical indicators from the last [`INDICATOR_WINDOW`] close-to-close returns and log dollar
/// volumes (oldest first): compounded 1/5/21-day returns, 5- and 21-day moving averages of the
/// close relative to the current close, 21-day return standard deviation and the z-score of the
/// current dollar volume.
pub fn compute_indicators(cc: &[f64], ldv: &[f64]) -> Result<[f64; N_INDICATORS]> {
    let w = INDICATOR_WINDOW;
    if cc.len() < w || ldv.len() < w {
        return Err(Error::Shape(format!("indicator window needs {w} days, got {} / {}", cc.len(), ldv.len())));
    }
    let cc = &cc[cc.len() - w..];
    let ldv = &ldv[ldv.len() - w..];
    let compound = |k: usize| cc[w - k..].iter().fold(1.0, |acc, r| acc * (1.0 + r)) - 1.0;
    // closes relative to today's close, newest first
    let mut rel = Vec::with_capacity(w);
    let mut c = 1.0;
    rel.push(c);
    for k in 1..w {
        c /= 1.0 + cc[w - k];
        rel.push(c);
    }
    let ma = |k: usize| rel[..k].iter().sum::<f64>() / k as f64 - 1.0;
    let sd = crate::stats::std_dev(cc, 1);
    let vm = crate::stats::mean(ldv);
    let vs = crate::stats::std_dev(ldv, 1);
    let vz = if vs > 0.0 { (ldv[w - 1] - vm) / vs } else { 0.0 };
    let out = [cc[w - 1], compound(5), compound(21), ma(5), ma(21), sd, vz];
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("indicator".into()));
    }
    Ok(out)
}

/// Affine standardisation of indicator vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorScaler {
    pub mean: [f64; N_INDICATORS],
    pub scale: [f64; N_INDICATORS],
}

impl IndicatorScaler {
    pub fn identity() -> Self {
        Self { mean: [0.0; N_INDICATORS], scale: [1.0; N_INDICATORS] }
    }

    pub fn fit(rows: &[[f64; N_INDICATORS]]) -> Self {
        let mut s = Self::identity();
        for k in 0..N_INDICATORS {
            let xs: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let sd = crate::stats::std_dev(&xs, 1);
            if xs.len() >= 2 && sd.is_finite() && sd > 0.0 {
                s.mean[k] = crate::stats::mean(&xs);
                s.scale[k] = sd;
            }
        }
        s
    }

    pub fn apply(&self, x: &[f64; N_INDICATORS]) -> [f64; N_INDICATORS] {
        let mut o = [0.0; N_INDICATORS];
        for k in 0..N_INDICATORS {
            o[k] = (x[k] - self.mean[k]) / self.scale[k];
        }
        o
    }
}
