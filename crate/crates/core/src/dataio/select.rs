use serde::{Deserialize, Serialize};

use crate::stats::pearson_pairwise;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Indicators retained after both passes, in candidate order.
    pub selected: Vec<usize>,
    /// Indicators that passed the relevance threshold.
    pub relevant: Vec<usize>,
    /// Indicators whose correlation with the target is undefined (constant or too sparse).
    pub undefined: Vec<usize>,
}

/// Two-pass macro feature selection.
///
/// Pass one keeps candidates with `|corr(candidate, target)| > tau_corr`. Pass two walks those in
/// input order and admits a candidate only when its largest absolute correlation with the
/// already-admitted set is below `tau_red`.
pub fn select_features(candidates: &[Vec<Option<f64>>], target: &[Option<f64>], tau_corr: f64, tau_red: f64) -> Selection {
    let mut out = Selection::default();
    for (k, c) in candidates.iter().enumerate() {
        assert_eq!(c.len(), target.len(), "candidate {k} not aligned with target");
        match pearson_pairwise(c, target, 3) {
            Some(r) if r.abs() > tau_corr => out.relevant.push(k),
            Some(_) => {}
            None => {
                log::warn!("macro candidate {k}: correlation with target undefined; dropped");
                out.undefined.push(k);
            }
        }
    }
    for &k in &out.relevant {
        let redundant = out
            .selected
            .iter()
            .map(|&s| pearson_pairwise(&candidates[k], &candidates[s], 3).map_or(0.0, f64::abs))
            .fold(0.0, f64::max);
        if redundant < tau_red {
            out.selected.push(k);
        }
    }
    out
}
