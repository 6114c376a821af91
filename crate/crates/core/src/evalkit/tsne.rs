use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self { perplexity: 50.0, iterations: 3000, learning_rate: 200.0, exaggeration: 12.0, exaggeration_iters: 250 }
    }
}

/// Column-wise z-scoring; constant columns become zero.
fn standardize(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = x[0].len();
    let n = x.len() as f64;
    let mut out = x.to_vec();
    for c in 0..k {
        let mean = x.iter().map(|r| r[c]).sum::<f64>() / n;
        let sd = (x.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for r in out.iter_mut() {
            r[c] = if sd > 0.0 { (r[c] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Row-conditional affinities with the bandwidth set by bisection to match `perplexity`.
fn affinities(x: &[Vec<f64>], perplexity: f64) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = s;
            d[j * n + i] = s;
        }
    }
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        let dmin = (0..n).filter(|&j| j != i).map(|j| d[i * n + j]).fold(f64::INFINITY, f64::min);
        for _ in 0..100 {
            let mut sum = 0.0;
            let mut dsum = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                let w = (-(d[i * n + j] - dmin) * beta).exp();
                p[i * n + j] = w;
                sum += w;
                dsum += w * (d[i * n + j] - dmin);
            }
            let h = sum.ln() + beta * dsum / sum;
            for j in 0..n {
                p[i * n + j] /= sum;
            }
            if (h - target).abs() < 1e-5 {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
    }
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = ((p[i * n + j] + p[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }
    sym
}

/// Exact one-dimensional t-SNE of the rows of `x` (columns are z-scored first).
pub fn tsne_1d(x: &[Vec<f64>], cfg: &TsneConfig, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let n = x.len();
    if n == 0 || x[0].is_empty() {
        return Err(Error::InvalidInput("t-SNE needs a non-empty matrix".into()));
    }
    if x.iter().any(|r| r.len() != x[0].len() || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput("t-SNE rows must be finite and of equal length".into()));
    }
    if ((n - 1) as f64) < cfg.perplexity {
        return Err(Error::Config(format!(
            "t-SNE with perplexity {} needs more than {} rows but got {n}; lower the perplexity or supply a longer series",
            cfg.perplexity, cfg.perplexity as usize
        )));
    }
    let p = affinities(&standardize(x), cfg.perplexity);
    let init = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y: Vec<f64> = (0..n).map(|_| init.sample(rng)).collect();
    let mut vel = vec![0.0; n];
    let mut gains = vec![1.0f64; n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![0.0; n];
    for it in 0..cfg.iterations {
        let exag = if it < cfg.exaggeration_iters { cfg.exaggeration } else { 1.0 };
        let momentum = if it < cfg.exaggeration_iters { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d = y[i] - y[j];
                let q = 1.0 / (1.0 + d * d);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        for i in 0..n {
            let mut g = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                let q = num[i * n + j];
                g += 4.0 * (exag * p[i * n + j] - q / z) * q * (y[i] - y[j]);
            }
            grad[i] = g;
        }
        for i in 0..n {
            gains[i] = if (grad[i] > 0.0) != (vel[i] > 0.0) { gains[i] + 0.2 } else { (gains[i] * 0.8).max(0.01) };
            vel[i] = momentum * vel[i] - cfg.learning_rate * gains[i] * grad[i];
            y[i] += vel[i];
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        y.iter_mut().for_each(|v| *v -= mean);
    }
    Ok(y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneRow {
    pub zx: f64,
    pub zy: f64,
    pub phase: String,
}

/// Embed flattened `w`-day feature windows and their aligned targets separately in one
/// dimension. Row `k` corresponds to the window ending at day `w - 1 + k`.
pub fn tsne_drift_diagnostic(
    features: &[Vec<f64>],
    targets: &[f64],
    phases: &[String],
    w: usize,
    cfg: &TsneConfig,
    rng: &mut impl Rng,
) -> Result<Vec<TsneRow>> {
    let t = features.len();
    if targets.len() != t || phases.len() != t {
        return Err(Error::Shape("features, targets and phases must have equal length".into()));
    }
    if w == 0 || t < w {
        return Err(Error::InvalidInput(format!("need at least w = {w} days, got {t}")));
    }
    let xs: Vec<Vec<f64>> = (w - 1..t).map(|e| features[e + 1 - w..=e].iter().flatten().copied().collect()).collect();
    let ys: Vec<Vec<f64>> = (w - 1..t).map(|e| vec![targets[e]]).collect();
    let zx = tsne_1d(&xs, cfg, rng)?;
    let zy = tsne_1d(&ys, cfg, rng)?;
    Ok((0..xs.len()).map(|k| TsneRow { zx: zx[k], zy: zy[k], phase: phases[w - 1 + k].clone() }).collect())
}

/// Mean silhouette coefficient of a one-dimensional embedding under the given labels.
pub fn silhouette_1d(z: &[f64], labels: &[String]) -> f64 {
    let n = z.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut by: std::collections::BTreeMap<&str, (f64, usize)> = Default::default();
        for j in (0..n).filter(|&j| j != i) {
            let e = by.entry(labels[j].as_str()).or_insert((0.0, 0));
            e.0 += (z[i] - z[j]).abs();
            e.1 += 1;
        }
        let a = by.get(labels[i].as_str()).map(|(s, c)| s / *c as f64).unwrap_or(0.0);
        let b = by.iter().filter(|(k, _)| **k != labels[i]).map(|(_, (s, c))| s / *c as f64).fold(f64::INFINITY, f64::min);
        if b.is_finite() && a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn too_few_rows_is_config_error() {
        let x = vec![vec![1.0, 2.0]; 10];
        assert!(matches!(tsne_1d(&x, &TsneConfig::default(), &mut rng()), Err(Error::Config(_))));
    }

    #[test]
    fn perplexity_is_matched() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let p = affinities(&standardize(&x), 10.0);
        // the symmetrised matrix sums to one
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
