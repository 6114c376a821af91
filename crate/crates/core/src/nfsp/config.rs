use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NfspConfig {
    /// Probability of acting from the best-response network.
    pub eta: f64,
    pub total_steps: u64,
    pub batch_size: usize,
    /// Steps before the first Q-network update.
    pub warmup: u64,
    pub q_every: u64,
    pub avg_every: u64,
    pub qbn_every: u64,
    pub adv_every: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub lr_q: f64,
    pub lr_avg: f64,
    pub lr_qbn: f64,
    pub lr_adv: f64,
    pub gamma: f64,
    pub adv_gamma: f64,
    pub target_sync: u64,
    pub circular_capacity: usize,
    pub reservoir_capacity: usize,
    pub hidden: Vec<usize>,
    pub qbn_hidden: usize,
    pub quantile_levels: Vec<f64>,
    /// Greedy evaluation episode every this many steps; 0 disables it.
    pub eval_every: u64,
    /// Training-log row every this many steps.
    pub log_every: u64,
    pub seed: u64,
}

impl Default for NfspConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            total_steps: 100_000,
            batch_size: 32,
            warmup: 1000,
            q_every: 1,
            avg_every: 2,
            qbn_every: 1,
            adv_every: 4,
            eps_start: 0.1,
            eps_end: 0.01,
            eps_decay_steps: 50_000,
            lr_q: 1e-3,
            lr_avg: 1e-3,
            lr_qbn: 1e-3,
            lr_adv: 1e-3,
            gamma: 0.99,
            adv_gamma: 0.99,
            target_sync: 500,
            circular_capacity: 100_000,
            reservoir_capacity: 200_000,
            hidden: vec![64, 64],
            qbn_hidden: 32,
            quantile_levels: crate::belief::DEFAULT_LEVELS.to_vec(),
            eval_every: 5000,
            log_every: 100,
            seed: 0,
        }
    }
}

impl NfspConfig {
    /// Small networks and a short replay memory, so best responses track the opponent's
    /// current mixture in a one-shot matrix game.
    pub fn matrix_game(seed: u64) -> Self {
        Self {
            total_steps: 100_000,
            batch_size: 64,
            warmup: 500,
            avg_every: 1,
            eps_start: 0.1,
            eps_end: 0.0,
            eps_decay_steps: 50_000,
            lr_q: 5e-3,
            lr_avg: 5e-3,
            target_sync: 100,
            circular_capacity: 1000,
            hidden: vec![16],
            eval_every: 0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta must lie in [0, 1]");
        }
        if self.total_steps == 0 {
            return bad("total_steps must be positive");
        }
        if self.batch_size == 0 || self.circular_capacity == 0 || self.reservoir_capacity == 0 || self.qbn_hidden == 0 {
            return bad("batch size, buffer capacities and network sizes must be positive");
        }
        if [self.q_every, self.avg_every, self.qbn_every, self.adv_every, self.target_sync, self.log_every].contains(&0) {
            return bad("update cadences must be positive");
        }
        if ![self.eps_start, self.eps_end, self.gamma, self.adv_gamma].iter().all(|x| (0.0..=1.0).contains(x)) {
            return bad("exploration rates and discounts must lie in [0, 1]");
        }
        if ![self.lr_q, self.lr_avg, self.lr_qbn, self.lr_adv].iter().all(|x| *x > 0.0 && x.is_finite()) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}
