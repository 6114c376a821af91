use std::path::Path;

use serde::{Deserialize, Serialize};

use super::buffers::CircularBuffer;
use super::qnet::{QNetSpec, QNetwork, Transition};
use crate::error::{Error, Result};
use crate::evalkit::BacktestReport;
use crate::market_env::{Action, MarketEnv, Observation, N_ACTIONS};

/// Run one episode with `policy` choosing from the observation and return its backtest.
pub fn rollout(env: &mut MarketEnv, seed: u64, mut policy: impl FnMut(&Observation) -> Result<Action>) -> Result<BacktestReport> {
    let mut obs = env.reset(seed)?;
    let mut values = vec![env.net_value()];
    let mut prev = Action::Flat;
    let mut trades = 0;
    while !env.is_done() {
        let a = policy(&obs)?;
        if a != prev {
            trades += 1;
        }
        prev = a;
        let out = env.step(a)?;
        values.push(env.net_value());
        obs = out.obs;
    }
    BacktestReport::from_net_values(values, trades)
}

/// Long from the first day to the last; one entry fee.
pub fn buy_and_hold(env: &mut MarketEnv) -> Result<BacktestReport> {
    if env.is_generative() {
        return Err(Error::Config("buy-and-hold is defined on the historical backend".into()));
    }
    rollout(env, 0, |_| Ok(Action::Long))
}

/// Linear decay from `start` to `end` over `decay_steps`.
pub fn linear_epsilon(step: u64, start: f64, end: f64, decay_steps: u64) -> f64 {
    if decay_steps == 0 || step >= decay_steps {
        return end;
    }
    start + (end - start) * step as f64 / decay_steps as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub warmup: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub target_sync: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            steps: 50_000,
            batch_size: 32,
            warmup: 1000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 20_000,
            buffer_capacity: 100_000,
            hidden: vec![64, 64],
            lr: 1e-3,
            gamma: 0.99,
            target_sync: 500,
        }
    }
}

/// Belief-free Q-learning trader on the flat observation.
#[derive(Clone, Debug)]
pub struct DqnAgent {
    pub q: QNetwork,
}

const DQN_KIND: &str = "dqn-trader";

impl DqnAgent {
    pub fn act(&self, obs: &Observation) -> Result<Action> {
        Ok(Action::from_index(self.q.greedy(&obs.flat)?))
    }

    pub fn save(&self, dir: &Path) -> Result<String> {
        crate::store::save(dir, DQN_KIND, &self.q.spec, &[&self.q.params])
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let env = crate::store::read_manifest::<QNetSpec>(dir, DQN_KIND)?;
        let mut q = QNetwork::new(env.meta.clone(), &mut crate::rng::stream(0, "load"))?;
        crate::store::load_into(dir, &env, &mut [&mut q.params])?;
        q.sync_target();
        Ok(Self { q })
    }
}

pub fn dqn_baseline_train(env: &mut MarketEnv, cfg: &DqnConfig, seed: u64) -> Result<DqnAgent> {
    if cfg.steps == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("DQN needs positive steps and batch size".into()));
    }
    let mut init = crate::rng::stream(seed, "dqn/init");
    let mut explore = crate::rng::stream(seed, "dqn/explore");
    let mut replay = crate::rng::stream(seed, "dqn/replay");
    let spec = QNetSpec {
        input: env.flat_dim(),
        n_actions: N_ACTIONS,
        hidden: cfg.hidden.clone(),
        lr: cfg.lr,
        gamma: cfg.gamma,
        target_sync: cfg.target_sync,
    };
    let mut q = QNetwork::new(spec, &mut init)?;
    let mut buf = CircularBuffer::new(cfg.buffer_capacity);
    let mut episode = 0u64;
    let mut obs = env.reset(seed)?;
    for step in 0..cfg.steps {
        let eps = linear_epsilon(step, cfg.eps_start, cfg.eps_end, cfg.eps_decay_steps);
        let a = q.act_epsilon_greedy(&obs.flat, eps, &mut explore)?;
        let out = env.step(Action::from_index(a))?;
        buf.push(Transition { state: obs.flat, action: a, reward: out.reward, next_state: out.obs.flat.clone(), done: out.done });
        obs = if out.done {
            episode += 1;
            env.reset(seed.wrapping_add(episode))?
        } else {
            out.obs
        };
        if step >= cfg.warmup {
            let batch = buf.sample(cfg.batch_size, &mut replay);
            let loss = q.td_update(&batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("DQN loss at step {step}")));
            }
        }
    }
    Ok(DqnAgent { q })
}
