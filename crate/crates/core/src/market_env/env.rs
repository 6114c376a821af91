use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::indicators::{compute_indicators, IndicatorScaler, INDICATOR_WINDOW, N_INDICATORS};
use super::perturb::MacroPerturbation;
use crate::dataio::{Dataset, Split, CC_RETURN, LOG_DOLLAR_VOLUME, N_FEATURES};
use crate::error::{Error, Result};
use crate::genmodel::{Conditioning, GenModel, Phase};
use crate::nn::Tensor;
use crate::rng::{stream, Rng as StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Long,
    Short,
    Flat,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Long, Action::Short, Action::Flat];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn position(self) -> f64 {
        match self {
            Action::Long => 1.0,
            Action::Short => -1.0,
            Action::Flat => 0.0,
        }
    }
}

pub const N_ACTIONS: usize = 3;

/// `p * ret - fee * 1[position changed]`.
pub fn trading_reward(action: Action, prev: Action, next_return: f64, fee: f64) -> f64 {
    let switch = if action.position() != prev.position() { fee } else { 0.0 };
    action.position() * next_return - switch
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Commission charged on every position change, as a fraction of net value.
    pub fee: f64,
    pub epsilon: f64,
    /// Indices (into the selected macro indicators) the adversary may move; empty means all.
    pub perturbable: Vec<usize>,
    pub perturb_observation: bool,
    pub perturb_conditioning: bool,
    /// Episode length of the generative backend.
    pub horizon: usize,
    /// Instrument traded.
    pub instrument: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { fee: 0.001, epsilon: 0.1, perturbable: Vec::new(), perturb_observation: true, perturb_conditioning: true, horizon: 252, instrument: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Scaled indicators, standardised current bar, previous action one-hot, current macro row.
    pub flat: Vec<f64>,
    /// Last `L` days, oldest first: standardised bar and macro row.
    pub sequence: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    /// Close-to-close return of the traded instrument on the new day.
    pub market_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub date: chrono::NaiveDate,
    pub action: Action,
    pub position: f64,
    pub reward: f64,
    pub net_value: f64,
}

#[derive(Clone)]
enum Backend {
    Historical,
    Generative { model: Arc<GenModel>, rng: StreamRng },
}

/// Single-instrument trading MDP over a dataset split, replaying history or rolling the
/// generator forward one day at a time.
#[derive(Clone)]
pub struct MarketEnv {
    ds: Arc<Dataset>,
    cfg: EnvConfig,
    range: Range<usize>,
    backend: Backend,
    subset: Vec<usize>,
    ind_scaler: IndicatorScaler,
    macro_scale: Vec<f64>,
    /// Raw feature rows (all instruments) of the episode timeline; entry `k` is day `base + k`.
    rows: Vec<Vec<f64>>,
    base: usize,
    t: usize,
    end: usize,
    prev: Action,
    net_value: f64,
    pert: MacroPerturbation,
    log: Vec<TradeRecord>,
    done: bool,
    started: bool,
}

fn raw_row(ds: &Dataset, t: usize) -> Vec<f64> {
    let (ni, nf) = (ds.market.n_instruments(), ds.market.n_features());
    let mut v = Vec::with_capacity(ni * nf);
    for i in 0..ni {
        for f in 0..nf {
            v.push(ds.market.get(t, i, f).unwrap_or(0.0));
        }
    }
    v
}

fn history_need(ds: &Dataset) -> usize {
    INDICATOR_WINDOW.max(ds.window.length)
}

impl MarketEnv {
    pub fn historical(ds: Arc<Dataset>, cfg: EnvConfig, split: Split) -> Result<Self> {
        Self::build(ds, cfg, split, Backend::Historical)
    }

    pub fn generative(ds: Arc<Dataset>, model: Option<Arc<GenModel>>, cfg: EnvConfig, split: Split) -> Result<Self> {
        let model = model.ok_or_else(|| Error::NotFitted("generative backend needs a generator checkpoint".into()))?;
        if model.phase < Phase::Forecaster {
            return Err(Error::NotFitted("generator checkpoint has not finished pretraining".into()));
        }
        let s = ds.market.n_instruments() * ds.market.n_features();
        if model.dims.n_series != s || model.dims.n_macro != ds.macro_panel.n_indicators() || model.dims.window != ds.window.length {
            return Err(Error::Config("generator checkpoint does not match the dataset layout".into()));
        }
        Self::build(ds, cfg, split, Backend::Generative { model, rng: stream(0, "env/generative") })
    }

    fn build(ds: Arc<Dataset>, cfg: EnvConfig, split: Split, backend: Backend) -> Result<Self> {
        if !(cfg.fee >= 0.0) || !(cfg.epsilon >= 0.0) {
            return Err(Error::Config("fee and epsilon must be nonnegative".into()));
        }
        if cfg.instrument >= ds.market.n_instruments() {
            return Err(Error::Config(format!("instrument {} out of range", cfg.instrument)));
        }
        let nm = ds.macro_panel.n_indicators();
        let subset = if cfg.perturbable.is_empty() { (0..nm).collect() } else { cfg.perturbable.clone() };
        if subset.iter().any(|&k| k >= nm) {
            return Err(Error::Config("perturbable indicator index out of range".into()));
        }
        let range = ds.splits.get(split);
        if range.is_empty() {
            return Err(Error::NoData(format!("{split:?} split is empty")));
        }
        let need = history_need(&ds);
        let train = ds.splits.train.clone();
        let mut ind_rows = Vec::new();
        for t in train.start.max(need - 1)..train.end {
            let (cc, ldv) = Self::hist_series(&ds, cfg.instrument, t);
            ind_rows.push(compute_indicators(&cc, &ldv)?);
        }
        let ind_scaler = IndicatorScaler::fit(&ind_rows);
        let pert = MacroPerturbation::none(subset.len());
        let mut env = Self {
            ds,
            cfg,
            range,
            backend,
            subset,
            ind_scaler,
            macro_scale: vec![1.0; nm],
            rows: Vec::new(),
            base: 0,
            t: 0,
            end: 0,
            prev: Action::Flat,
            net_value: 1.0,
            pert,
            log: Vec::new(),
            done: true,
            started: false,
        };
        env.episode_bounds(0)?;
        Ok(env)
    }

    fn hist_series(ds: &Dataset, i: usize, t: usize) -> (Vec<f64>, Vec<f64>) {
        let lo = t + 1 - INDICATOR_WINDOW;
        let cc = (lo..=t).map(|d| ds.market.get(d, i, CC_RETURN).unwrap_or(0.0)).collect();
        let ldv = (lo..=t).map(|d| ds.market.get(d, i, LOG_DOLLAR_VOLUME).unwrap_or(0.0)).collect();
        (cc, ldv)
    }

    /// `(first decision day, last day)` for an episode started with `seed`.
    fn episode_bounds(&mut self, seed: u64) -> Result<(usize, usize)> {
        let need = history_need(&self.ds);
        let first = self.range.start.max(need - 1);
        let last = self.range.end - 1;
        match &mut self.backend {
            Backend::Historical => {
                if first >= last {
                    return Err(Error::NoData("split is too short for one trading step".into()));
                }
                Ok((first, last))
            }
            Backend::Generative { rng, .. } => {
                let l = self.ds.window.length;
                // macro rows up to t + L must exist inside the split
                let latest_end = (self.range.end as i64) - (l as i64);
                let mut horizon = self.cfg.horizon as i64;
                let mut hi = latest_end - horizon;
                if hi < first as i64 {
                    horizon = latest_end - first as i64;
                    hi = first as i64;
                    if horizon <= 0 {
                        return Err(Error::NoData("split is too short for a generative episode".into()));
                    }
                    log::info!("generative horizon shortened to {horizon} days to fit the split");
                }
                *rng = stream(seed, "env/generative");
                let start = rng.random_range(first as i64..=hi) as usize;
                Ok((start, start + horizon as usize))
            }
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.ds
    }

    pub fn perturbable(&self) -> &[usize] {
        &self.subset
    }

    pub fn is_generative(&self) -> bool {
        matches!(self.backend, Backend::Generative { .. })
    }

    pub fn flat_dim(&self) -> usize {
        N_INDICATORS + N_FEATURES + N_ACTIONS + self.ds.macro_panel.n_indicators()
    }

    pub fn seq_dim(&self) -> usize {
        N_FEATURES + self.ds.macro_panel.n_indicators()
    }

    pub fn seq_len(&self) -> usize {
        self.ds.window.length
    }

    pub fn net_value(&self) -> f64 {
        self.net_value
    }

    pub fn trade_log(&self) -> &[TradeRecord] {
        &self.log
    }

    /// Close-to-close returns of the traded instrument for the `k` days ending today, oldest first.
    pub fn recent_returns(&self, k: usize) -> Vec<f64> {
        let lo = self.t.saturating_sub(k - 1).max(self.base);
        (lo..=self.t).map(|d| self.row(d)[self.cfg.instrument * N_FEATURES + CC_RETURN]).collect()
    }

    pub fn current_day(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Number of steps the current episode will take.
    pub fn episode_len(&self) -> usize {
        self.end - self.t0()
    }

    fn t0(&self) -> usize {
        self.base + history_need(&self.ds) - 1
    }

    /// Set the perturbation applied from the next observation and generated day onward.
    pub fn set_perturbation(&mut self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.subset.len() {
            return Err(Error::Shape(format!("expected {} perturbation entries, got {}", self.subset.len(), alpha.len())));
        }
        self.pert = MacroPerturbation::clipped(alpha.to_vec(), self.cfg.epsilon);
        Ok(())
    }

    pub fn perturbation(&self) -> &MacroPerturbation {
        &self.pert
    }

    /// Start an episode: net value 1, previous action Flat, no perturbation.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let (start, end) = self.episode_bounds(seed)?;
        let need = history_need(&self.ds);
        self.base = start + 1 - need;
        self.rows = (self.base..=start).map(|d| raw_row(&self.ds, d)).collect();
        if !self.is_generative() {
            self.rows.extend((start + 1..=end).map(|d| raw_row(&self.ds, d)));
        }
        self.t = start;
        self.end = end;
        self.prev = Action::Flat;
        self.net_value = 1.0;
        self.pert = MacroPerturbation::none(self.subset.len());
        self.log.clear();
        self.done = false;
        self.started = true;
        Ok(self.observe(true))
    }

    fn row(&self, day: usize) -> &[f64] {
        &self.rows[day - self.base]
    }

    fn macro_std(&self, day: usize, perturbed: bool) -> Vec<f64> {
        let nm = self.ds.macro_panel.n_indicators();
        let row: Vec<f64> = (0..nm).map(|k| self.ds.macro_panel.standardized(day, k)).collect();
        if perturbed {
            // standardised scale: the training std cancels and the shift is epsilon * alpha
            super::perturb::apply_perturbation(&row, nm, &self.subset, &self.macro_scale, &self.pert)
        } else {
            row
        }
    }

    fn bar_std(&self, day: usize) -> Vec<f64> {
        let i = self.cfg.instrument;
        let row = self.row(day);
        (0..N_FEATURES).map(|f| self.ds.scaler.forward(i, f, row[i * N_FEATURES + f])).collect()
    }

    /// Observation at the current day; `perturbed` selects whether the macro part carries the
    /// current perturbation.
    pub fn observe(&self, perturbed: bool) -> Observation {
        let perturbed = perturbed && self.cfg.perturb_observation;
        let i = self.cfg.instrument;
        let lo = self.t + 1 - INDICATOR_WINDOW;
        let cc: Vec<f64> = (lo..=self.t).map(|d| self.row(d)[i * N_FEATURES + CC_RETURN]).collect();
        let ldv: Vec<f64> = (lo..=self.t).map(|d| self.row(d)[i * N_FEATURES + LOG_DOLLAR_VOLUME]).collect();
        let ind = compute_indicators(&cc, &ldv).unwrap_or([0.0; N_INDICATORS]);
        let mut flat = self.ind_scaler.apply(&ind).to_vec();
        flat.extend(self.bar_std(self.t));
        let mut onehot = [0.0; N_ACTIONS];
        onehot[self.prev.index()] = 1.0;
        flat.extend(onehot);
        flat.extend(self.macro_std(self.t, perturbed));
        let l = self.ds.window.length;
        let sequence = (self.t + 1 - l..=self.t)
            .map(|d| {
                let mut v = self.bar_std(d);
                v.extend(self.macro_std(d, perturbed));
                v
            })
            .collect();
        Observation { flat, sequence }
    }

    fn generate_next(&mut self) -> Result<()> {
        let Backend::Generative { model, rng } = &mut self.backend else { return Ok(()) };
        let ds = &self.ds;
        let l = ds.window.length;
        let nm = ds.macro_panel.n_indicators();
        let s = model.dims.n_series;
        let t = self.t;
        let mut hist = Vec::with_capacity(l * s);
        for d in t + 1 - l..=t {
            let row = &self.rows[d - self.base];
            for i in 0..ds.market.n_instruments() {
                for f in 0..N_FEATURES {
                    hist.push(ds.scaler.forward(i, f, row[i * N_FEATURES + f]));
                }
            }
        }
        let mut macro_rows = Vec::with_capacity(2 * l * nm);
        for d in t + 1 - l..=t + l {
            macro_rows.extend((0..nm).map(|k| ds.macro_panel.standardized(d, k)));
        }
        if self.cfg.perturb_conditioning {
            macro_rows = super::perturb::apply_perturbation(&macro_rows, nm, &self.subset, &self.macro_scale, &self.pert);
        }
        let cond = Conditioning { history: Tensor::from_vec(l, s, hist), macro_window: Tensor::from_vec(2 * l, nm, macro_rows) };
        let noise = crate::genmodel::stack(&model.sample_noise(rng, 1));
        let x = model.generate(&cond, &noise)?;
        let mut row = Vec::with_capacity(s);
        for i in 0..ds.market.n_instruments() {
            for f in 0..N_FEATURES {
                let mut v = ds.scaler.inverse(i, f, x.get(0, i * N_FEATURES + f));
                if f == CC_RETURN && v < -0.95 {
                    log::warn!("generated return {v} below -95%; clamped");
                    v = -0.95;
                }
                row.push(v);
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Take `action` at the current day and move to the next one.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done || !self.started {
            return Err(Error::EpisodeOver);
        }
        if self.is_generative() {
            self.generate_next()?;
        }
        let next = self.t + 1;
        let ret = self.row(next)[self.cfg.instrument * N_FEATURES + CC_RETURN];
        let reward = trading_reward(action, self.prev, ret, self.cfg.fee);
        if !reward.is_finite() {
            return Err(Error::NonFinite(format!("reward at day {next}")));
        }
        self.net_value *= 1.0 + reward;
        self.prev = action;
        self.t = next;
        self.done = self.t >= self.end;
        self.log.push(TradeRecord {
            date: self.ds.market.dates[self.t],
            action,
            position: action.position(),
            reward,
            net_value: self.net_value,
        });
        Ok(StepOutcome { obs: self.observe(true), reward, done: self.done, market_return: ret })
    }
}

/// `date,action,position,reward,net_value` rows.
pub fn trade_log_csv(log: &[TradeRecord]) -> String {
    let mut s = String::from("date,action,position,reward,net_value\n");
    for r in log {
        let a = match r.action {
            Action::Long => "long",
            Action::Short => "short",
            Action::Flat => "flat",
        };
        s.push_str(&format!("{},{a},{},{},{}\n", r.date, r.position, r.reward, r.net_value));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_examples() {
        assert!((trading_reward(Action::Long, Action::Flat, 0.02, 0.001) - 0.019).abs() < 1e-15);
        assert_eq!(trading_reward(Action::Flat, Action::Flat, 0.05, 0.001), 0.0);
        assert_eq!(trading_reward(Action::Short, Action::Short, 0.02, 0.001), -0.02);
        assert_eq!(trading_reward(Action::Long, Action::Long, 0.013, 0.0) + trading_reward(Action::Short, Action::Short, 0.013, 0.0), 0.0);
    }
}
