use rand::Rng;

use crate::agents::{AvgPolicyNetwork, CircularBuffer, PolicySpec, QNetSpec, QNetwork, ReservoirBuffer, Transition};
use crate::error::Result;

/// Which policy produced an action during anticipatory mixing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    BestResponse,
    Average,
}

/// One fictitious-self-play learner: a best-response Q-network, an average policy, the replay
/// memory that trains the former and the reservoir that trains the latter.
#[derive(Clone, Debug)]
pub struct NfspPlayer {
    pub q: QNetwork,
    pub avg: AvgPolicyNetwork,
    pub memory: CircularBuffer<Transition>,
    pub reservoir: ReservoirBuffer<(Vec<f64>, usize)>,
}

impl NfspPlayer {
    pub fn new(q: QNetSpec, avg: PolicySpec, memory: usize, reservoir: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            q: QNetwork::new(q, rng)?,
            avg: AvgPolicyNetwork::new(avg, rng)?,
            memory: CircularBuffer::new(memory),
            reservoir: ReservoirBuffer::new(reservoir),
        })
    }

    /// With probability `eta` act epsilon-greedily on Q, otherwise sample the average policy.
    pub fn act(&self, state: &[f64], eta: f64, eps: f64, rng: &mut impl Rng) -> Result<(usize, Branch)> {
        if rng.random::<f64>() < eta {
            Ok((self.q.act_epsilon_greedy(state, eps, rng)?, Branch::BestResponse))
        } else {
            Ok((self.avg.sample(state, rng)?, Branch::Average))
        }
    }

    /// Route one transition: always into replay memory, into the reservoir only for
    /// best-response actions.
    pub fn record(&mut self, t: Transition, branch: Branch, rng: &mut impl Rng) {
        if branch == Branch::BestResponse {
            self.reservoir.push((t.state.clone(), t.action), rng);
        }
        self.memory.push(t);
    }

    pub fn update_q(&mut self, batch_size: usize, rng: &mut impl Rng) -> Result<Option<f64>> {
        if self.memory.is_empty() {
            return Ok(None);
        }
        let batch = self.memory.sample(batch_size, rng);
        self.q.td_update(&batch).map(Some)
    }

    pub fn update_avg(&mut self, batch_size: usize, rng: &mut impl Rng) -> Result<Option<f64>> {
        if self.reservoir.is_empty() {
            return Ok(None);
        }
        let batch: Vec<(&[f64], usize)> = self.reservoir.sample(batch_size, rng).into_iter().map(|(s, a)| (s.as_slice(), *a)).collect();
        self.avg.supervised_update(&batch).map(Some)
    }
}
