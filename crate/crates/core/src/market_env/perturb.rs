use serde::{Deserialize, Serialize};

/// Additive shift of selected macro indicators: `M* = M + epsilon * alpha * scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroPerturbation {
    /// One entry per perturbable indicator, each in `[-1, 1]`.
    pub alpha: Vec<f64>,
    pub epsilon: f64,
}

impl MacroPerturbation {
    pub fn none(n: usize) -> Self {
        Self { alpha: vec![0.0; n], epsilon: 0.0 }
    }

    /// Clip `alpha` into `[-1, 1]`, logging when anything changed.
    pub fn clipped(alpha: Vec<f64>, epsilon: f64) -> Self {
        let clipped: Vec<f64> = alpha.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        if clipped != alpha {
            log::warn!("perturbation {alpha:?} exceeds the unit box; clipped");
        }
        Self { alpha: clipped, epsilon }
    }

    pub fn is_identity(&self) -> bool {
        self.epsilon == 0.0 || self.alpha.iter().all(|a| *a == 0.0)
    }
}

/// Apply `pert` to the columns `subset` of a row-major window with `n_cols` columns. `scale`
/// holds one entry per column; untouched columns (and everything when the perturbation is the
/// identity) are returned bit-identical.
pub fn apply_perturbation(window: &[f64], n_cols: usize, subset: &[usize], scale: &[f64], pert: &MacroPerturbation) -> Vec<f64> {
    assert_eq!(subset.len(), pert.alpha.len(), "one alpha per perturbable indicator");
    let mut out = window.to_vec();
    if pert.is_identity() {
        return out;
    }
    for (&col, &a) in subset.iter().zip(&pert.alpha) {
        if a == 0.0 {
            continue;
        }
        let shift = pert.epsilon * a.clamp(-1.0, 1.0) * scale[col];
        for row in out.chunks_mut(n_cols) {
            row[col] += shift;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epsilon_is_bit_identity() {
        let w = vec![-0.0, 1.5, -2.25, 3.0];
        let out = apply_perturbation(&w, 2, &[0, 1], &[1.0, 2.0], &MacroPerturbation { alpha: vec![1.0, -1.0], epsilon: 0.0 });
        assert!(out.iter().zip(&w).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn zero_alpha_is_identity() {
        let w = vec![-0.0, 1.5];
        let out = apply_perturbation(&w, 2, &[0, 1], &[1.0, 2.0], &MacroPerturbation { alpha: vec![0.0, 0.0], epsilon: 0.3 });
        assert!(out.iter().zip(&w).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn shift_uses_training_scale() {
        let w = vec![1.0, 5.0, 2.0, 6.0, 3.0, 7.0];
        let out = apply_perturbation(&w, 2, &[1], &[1.0, 2.0], &MacroPerturbation { alpha: vec![1.0], epsilon: 0.1 });
        assert_eq!(out[0].to_bits(), 1.0f64.to_bits());
        for r in 0..3 {
            assert!((out[2 * r + 1] - (w[2 * r + 1] + 0.2)).abs() < 1e-15);
        }
    }

    #[test]
    fn clipping_bounds_alpha() {
        let p = MacroPerturbation::clipped(vec![3.0, -0.5, -9.0], 1.0);
        assert_eq!(p.alpha, vec![1.0, -0.5, -1.0]);
    }
}
