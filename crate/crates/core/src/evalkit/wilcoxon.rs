use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest sample size handled by exact enumeration.
pub const EXACT_MAX_N: usize = 25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Nonzero differences used.
    pub n: usize,
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    /// One-sided p-value for the alternative "differences tend to be positive".
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks (1-based) of `|d|`, tied magnitudes sharing their average rank.
pub fn signed_ranks(diffs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..diffs.len()).collect();
    idx.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut ranks = vec![0.0; diffs.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && diffs[idx[e + 1]].abs() == diffs[idx[k]].abs() {
            e += 1;
        }
        let r = (k + e) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=e] {
            ranks[i] = r;
        }
        k = e + 1;
    }
    ranks
}

/// Directional signed-rank test. Zeros are dropped; exact for `n <= 25`, normal approximation
/// with tie and continuity correction above.
pub fn wilcoxon_directional(diffs: &[f64]) -> Result<WilcoxonResult> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("Wilcoxon differences".into()));
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nz.is_empty() {
        return Err(Error::DegenerateSeries("all paired differences are zero".into()));
    }
    let n = nz.len();
    let ranks = signed_ranks(&nz);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    if n <= EXACT_MAX_N {
        // midranks are multiples of 1/2, so doubled ranks are integers
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0u64; total + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let obs = (2.0 * w_plus).round() as usize;
        let hits: u64 = counts[obs..].iter().sum();
        let p = hits as f64 / (1u64 << n) as f64;
        return Ok(WilcoxonResult { n, w_plus, p_value: p, exact: true });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut k = 0;
    while k < sorted.len() {
        let mut e = k;
        while e + 1 < sorted.len() && sorted[e + 1] == sorted[k] {
            e += 1;
        }
        let t = (e - k + 1) as f64;
        tie += t * t * t - t;
        k = e + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie / 48.0;
    let z = (w_plus - mean - 0.5) / var.sqrt();
    let p = 1.0 - Normal::new(0.0, 1.0).expect("unit normal").cdf(z);
    Ok(WilcoxonResult { n, w_plus, p_value: p, exact: false })
}
