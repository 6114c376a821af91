use serde::{Deserialize, Serialize};

use super::qnet::{QNetwork, Transition};
use crate::error::{Error, Result};

/// The adversary's discrete action set: the zero vector, then `+e_p` and `-e_p` for each
/// perturbable indicator `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCatalog {
    pub entries: Vec<Vec<f64>>,
}

impl PerturbationCatalog {
    pub fn standard(n_perturbable: usize) -> Self {
        let mut entries = vec![vec![0.0; n_perturbable]];
        for p in 0..n_perturbable {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; n_perturbable];
                e[p] = s;
                entries.push(e);
            }
        }
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, k: usize) -> Result<&[f64]> {
        self.entries.get(k).map(Vec::as_slice).ok_or_else(|| Error::InvalidInput(format!("no catalog entry {k}")))
    }
}

/// One adversary step, stored with the trader's reward; the adversary learns on its negation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversaryTransition {
    pub state: Vec<f64>,
    pub pert_index: usize,
    pub trader_reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

impl AdversaryTransition {
    pub fn zero_sum(&self) -> Transition {
        Transition {
            state: self.state.clone(),
            action: self.pert_index,
            reward: -self.trader_reward,
            next_state: self.next_state.clone(),
            done: self.done,
        }
    }
}

/// Q-learning step on the negated trader reward.
pub fn adversary_update(q: &mut QNetwork, batch: &[&AdversaryTransition]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::DegenerateBatch("empty adversary batch".into()));
    }
    let ts: Vec<Transition> = batch.iter().map(|t| t.zero_sum()).collect();
    let refs: Vec<&Transition> = ts.iter().collect();
    q.td_update(&refs)
}
