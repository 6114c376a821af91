//! Quantile belief network: a sequence encoder whose head predicts fixed quantiles of a
//! short-horizon return statistic, trained with the pinball loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, LayerNorm, Linear, Lstm, Params, Tape, Tensor, Var};

pub const DEFAULT_LEVELS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];
/// Days averaged by the belief target.
pub const TARGET_DAYS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub q: Vec<f64>,
    pub levels: Vec<f64>,
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() || levels.iter().any(|q| !(*q > 0.0 && *q < 1.0)) || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("quantile levels must be strictly increasing inside (0, 1)".into()));
    }
    Ok(())
}

/// `sum_k max(q_k u_k, (q_k - 1) u_k) / Q` with `u_k = y - yhat_k`, for one prediction.
pub fn pinball(pred: &[f64], y: f64, levels: &[f64]) -> f64 {
    pred.iter().zip(levels).map(|(p, q)| {
        let u = y - p;
        (q * u).max((q - 1.0) * u)
    }).sum::<f64>() / levels.len() as f64
}

/// Mean pinball loss of a `batch x Q` prediction against a `batch x 1` target.
pub fn pinball_loss(tape: &mut Tape, pred: Var, target: &Tensor, levels: &[f64]) -> Var {
    let (b, q) = tape.shape(pred);
    assert_eq!(q, levels.len(), "one prediction per level");
    assert_eq!(target.shape(), (b, 1), "one target per row");
    let y = tape.constant(target.clone());
    let lv = tape.constant(Tensor::row(levels.to_vec()));
    let u = tape.sub(y, pred);
    // max(q u, (q - 1) u) = q u + relu(-u)
    let qu = tape.mul(u, lv);
    let nu = tape.neg(u);
    let r = tape.relu(nu);
    let l = tape.add(qu, r);
    tape.mean(l)
}

/// Mean of the last [`TARGET_DAYS`] returns of `returns` (oldest first), or `None` if too short.
pub fn moving_average_target(returns: &[f64]) -> Option<f64> {
    (returns.len() >= TARGET_DAYS).then(|| returns[returns.len() - TARGET_DAYS..].iter().sum::<f64>() / TARGET_DAYS as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QbnDims {
    pub input: usize,
    pub hidden: usize,
    pub levels: Vec<f64>,
}

/// Per-step embedding, LSTM over the window, layer normalisation, linear quantile head.
#[derive(Clone, Debug)]
pub struct Qbn {
    pub dims: QbnDims,
    pub params: Params,
    embed: Linear,
    lstm: Lstm,
    norm: LayerNorm,
    head: Linear,
    opt: Adam,
    pub updates: u64,
}

impl Qbn {
    pub fn new(dims: QbnDims, lr: f64, rng: &mut impl Rng) -> Result<Self> {
        check_levels(&dims.levels)?;
        if dims.input == 0 || dims.hidden == 0 {
            return Err(Error::Config("QBN sizes must be positive".into()));
        }
        let mut params = Params::new();
        let embed = Linear::new(&mut params, "qbn.embed", dims.input, dims.hidden, rng);
        let lstm = Lstm::new(&mut params, "qbn.lstm", dims.hidden, dims.hidden, rng);
        let norm = LayerNorm::new(&mut params, "qbn.norm", dims.hidden);
        let head = Linear::new(&mut params, "qbn.head", dims.hidden, dims.levels.len(), rng);
        Ok(Self { dims, params, embed, lstm, norm, head, opt: Adam::new(lr).with_clip(5.0), updates: 0 })
    }

    pub fn levels(&self) -> &[f64] {
        &self.dims.levels
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.opt.lr = lr;
    }

    /// Raw (unsorted) quantile outputs for a batch of equal-length windows.
    pub fn forward(&self, tape: &mut Tape, windows: &[&[Vec<f64>]]) -> Result<Var> {
        let b = windows.len();
        if b == 0 {
            return Err(Error::DegenerateBatch("no windows".into()));
        }
        let len = windows[0].len();
        if len == 0 || windows.iter().any(|w| w.len() != len || w.iter().any(|r| r.len() != self.dims.input)) {
            return Err(Error::Shape(format!("QBN expects equal-length windows of {}-wide rows", self.dims.input)));
        }
        let mut steps = Vec::with_capacity(len);
        for j in 0..len {
            let data: Vec<f64> = windows.iter().flat_map(|w| w[j].iter().copied()).collect();
            let x = tape.constant(Tensor::from_vec(b, self.dims.input, data));
            let e = self.embed.forward(tape, &self.params, x);
            steps.push(Activation::Tanh.apply(tape, e));
        }
        let hs = self.lstm.forward(tape, &self.params, &steps);
        let last = *hs.last().expect("non-empty window");
        let n = self.norm.forward(tape, &self.params, last);
        Ok(self.head.forward(tape, &self.params, n))
    }

    /// Sorted quantiles for one window, available even before the first update.
    pub fn belief_raw(&self, window: &[Vec<f64>]) -> Result<Belief> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, &[window])?;
        let mut q = tape.value(out).data.clone();
        q.sort_by(f64::total_cmp);
        Ok(Belief { q, levels: self.dims.levels.clone() })
    }

    /// Sorted quantiles; errors if the network has never been updated.
    pub fn infer(&self, window: &[Vec<f64>]) -> Result<Belief> {
        if self.updates == 0 {
            return Err(Error::NotFitted("quantile belief network has not been trained".into()));
        }
        self.belief_raw(window)
    }

    pub fn loss(&self, tape: &mut Tape, batch: &[(&[Vec<f64>], f64)]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::DegenerateBatch("empty belief batch".into()));
        }
        let windows: Vec<&[Vec<f64>]> = batch.iter().map(|(w, _)| *w).collect();
        let pred = self.forward(tape, &windows)?;
        let y = Tensor::from_vec(batch.len(), 1, batch.iter().map(|(_, y)| *y).collect());
        Ok(pinball_loss(tape, pred, &y, &self.dims.levels))
    }

    /// One optimiser step on the mean pinball loss; returns the loss before the step.
    pub fn update(&mut self, batch: &[(&[Vec<f64>], f64)]) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = self.loss(&mut tape, batch)?;
        let v = tape.scalar_value(loss);
        let g = tape.backward(loss).for_params(&self.params);
        self.opt.step(&mut self.params, &g);
        self.updates += 1;
        Ok(v)
    }
}

const QBN_KIND: &str = "quantile-belief";

#[derive(Serialize, Deserialize)]
struct QbnMeta {
    dims: QbnDims,
    updates: u64,
}

impl Qbn {
    pub fn save(&self, dir: &std::path::Path) -> Result<String> {
        crate::store::save(dir, QBN_KIND, &QbnMeta { dims: self.dims.clone(), updates: self.updates }, &[&self.params])
    }

    pub fn load(dir: &std::path::Path) -> Result<Self> {
        let env = crate::store::read_manifest::<QbnMeta>(dir, QBN_KIND)?;
        let mut q = Qbn::new(env.meta.dims.clone(), 1e-3, &mut crate::rng::stream(0, "load"))?;
        crate::store::load_into(dir, &env, &mut [&mut q.params])?;
        q.updates = env.meta.updates;
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball(&[0.0], 1.0, &[0.5]), 0.5);
        assert!((pinball(&[0.0], 1.0, &[0.9]) - 0.9).abs() < 1e-15);
        assert!((pinball(&[1.0], 0.0, &[0.9]) - 0.1).abs() < 1e-15);
        assert_eq!(pinball(&[0.3, 0.3], 0.3, &[0.1, 0.9]), 0.0);
    }

    #[test]
    fn tape_pinball_matches_scalar() {
        let levels = DEFAULT_LEVELS.to_vec();
        let pred = vec![-0.2, 0.1, 0.0, 0.4, 0.35, 1.0, -1.0, 0.2, 0.3, 0.1];
        let y = [0.05, -0.3];
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::from_vec(2, 5, pred.clone()));
        let l = pinball_loss(&mut tape, p, &Tensor::from_vec(2, 1, y.to_vec()), &levels);
        let expect = (pinball(&pred[..5], y[0], &levels) + pinball(&pred[5..], y[1], &levels)) / 2.0;
        assert!((tape.scalar_value(l) - expect).abs() < 1e-15);
    }

    #[test]
    fn levels_validated() {
        assert!(check_levels(&[0.5, 0.4]).is_err());
        assert!(check_levels(&[0.0, 0.4]).is_err());
        assert!(check_levels(&DEFAULT_LEVELS).is_ok());
    }

    #[test]
    fn moving_average_needs_five_days() {
        assert_eq!(moving_average_target(&[1.0; 4]), None);
        assert_eq!(moving_average_target(&[9.0, 1.0, 2.0, 3.0, 4.0, 5.0]), Some(3.0));
    }
}
