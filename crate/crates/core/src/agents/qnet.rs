use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Mlp, Params, Tape, Tensor, Var};

/// One replay entry. `state` already carries any belief features appended to the observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetSpec {
    pub input: usize,
    pub n_actions: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub target_sync: u64,
}

impl QNetSpec {
    pub fn new(input: usize, n_actions: usize) -> Self {
        Self { input, n_actions, hidden: vec![64, 64], lr: 1e-3, gamma: 0.99, target_sync: 500 }
    }

    fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input];
        s.extend(&self.hidden);
        s.push(self.n_actions);
        s
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// `r + gamma * max_next`, with the bootstrap dropped on terminal steps.
pub fn td_target(reward: f64, gamma: f64, max_next: f64, done: bool) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * max_next
    }
}

pub(crate) fn batch_tensor(rows: &[&[f64]], width: usize) -> Result<Tensor> {
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Shape(format!("expected input rows of width {width}")));
    }
    Ok(Tensor::from_vec(rows.len(), width, rows.iter().flat_map(|r| r.iter().copied()).collect()))
}

pub(crate) fn one_hot(actions: &[usize], n: usize) -> Tensor {
    let mut t = Tensor::zeros(actions.len(), n);
    for (i, &a) in actions.iter().enumerate() {
        t.data[i * n + a] = 1.0;
    }
    t
}

/// Action-value network with a target copy refreshed every `target_sync` updates.
#[derive(Clone, Debug)]
pub struct QNetwork {
    pub spec: QNetSpec,
    pub params: Params,
    pub target: Params,
    mlp: Mlp,
    opt: Adam,
    pub updates: u64,
}

impl QNetwork {
    pub fn new(spec: QNetSpec, rng: &mut impl Rng) -> Result<Self> {
        if spec.input == 0 || spec.n_actions == 0 || !(0.0..=1.0).contains(&spec.gamma) || spec.target_sync == 0 {
            return Err(Error::Config("Q-network needs positive sizes, gamma in [0, 1] and a positive sync period".into()));
        }
        let mut params = Params::new();
        let mlp = Mlp::new(&mut params, "q", &spec.sizes(), Activation::Relu, Activation::Identity, rng);
        let target = params.clone();
        let opt = Adam::new(spec.lr).with_clip(10.0);
        Ok(Self { spec, params, target, mlp, opt, updates: 0 })
    }

    pub fn forward(&self, tape: &mut Tape, params: &Params, x: Var) -> Var {
        self.mlp.forward(tape, params, x)
    }

    fn eval_with(&self, params: &Params, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let x = tape.constant(batch_tensor(rows, self.spec.input)?);
        let q = self.forward(&mut tape, params, x);
        Ok(tape.value(q).data.chunks(self.spec.n_actions).map(<[f64]>::to_vec).collect())
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_with(&self.params, &[state])?.remove(0))
    }

    pub fn target_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_with(&self.target, &[state])?.remove(0))
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(state)?))
    }

    /// Greedy with probability `1 - eps`, uniform otherwise.
    pub fn act_epsilon_greedy(&self, state: &[f64], eps: f64, rng: &mut impl Rng) -> Result<usize> {
        if rng.random::<f64>() < eps {
            Ok(rng.random_range(0..self.spec.n_actions))
        } else {
            self.greedy(state)
        }
    }

    /// Bootstrapped targets from the target network.
    pub fn td_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let next: Vec<&[f64]> = batch.iter().map(|t| t.next_state.as_slice()).collect();
        let qn = self.eval_with(&self.target, &next)?;
        Ok(batch
            .iter()
            .zip(qn)
            .map(|(t, q)| td_target(t.reward, self.spec.gamma, q[argmax(&q)], t.done))
            .collect())
    }

    /// Mean squared TD error of the online network against fixed `targets`.
    pub fn td_loss(&self, tape: &mut Tape, params: &Params, batch: &[&Transition], targets: &[f64]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::DegenerateBatch("empty TD batch".into()));
        }
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let x = tape.constant(batch_tensor(&states, self.spec.input)?);
        let q = self.forward(tape, params, x);
        let acts: Vec<usize> = batch.iter().map(|t| t.action).collect();
        if acts.iter().any(|&a| a >= self.spec.n_actions) {
            return Err(Error::InvalidInput("action index outside the network's action set".into()));
        }
        let mask = tape.constant(one_hot(&acts, self.spec.n_actions));
        let picked = tape.mul(q, mask);
        let pred = tape.sum_cols(picked);
        let y = tape.constant(Tensor::from_vec(batch.len(), 1, targets.to_vec()));
        let d = tape.sub(pred, y);
        let sq = tape.square(d);
        Ok(tape.mean(sq))
    }

    /// One optimiser step on the TD loss; returns the loss before the step.
    pub fn td_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::DegenerateBatch("empty TD batch".into()));
        }
        let targets = self.td_targets(batch)?;
        let mut tape = Tape::new();
        let loss = self.td_loss(&mut tape, &self.params, batch, &targets)?;
        let v = tape.scalar_value(loss);
        let g = tape.backward(loss).for_params(&self.params);
        self.opt.step(&mut self.params, &g);
        self.updates += 1;
        if self.updates % self.spec.target_sync == 0 {
            self.target.copy_from(&self.params);
        }
        Ok(v)
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.params);
    }
}
