use rand::Rng;
use serde::{Deserialize, Serialize};

use super::qnet::{batch_tensor, one_hot};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Mlp, Params, Tape, Var, LOGIT_CLAMP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub input: usize,
    pub n_actions: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
}

impl PolicySpec {
    pub fn new(input: usize, n_actions: usize) -> Self {
        Self { input, n_actions, hidden: vec![64, 64], lr: 1e-3 }
    }
}

/// Softmax policy fit by supervised learning on past best-response actions.
#[derive(Clone, Debug)]
pub struct AvgPolicyNetwork {
    pub spec: PolicySpec,
    pub params: Params,
    mlp: Mlp,
    opt: Adam,
    pub updates: u64,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

impl AvgPolicyNetwork {
    pub fn new(spec: PolicySpec, rng: &mut impl Rng) -> Result<Self> {
        if spec.input == 0 || spec.n_actions == 0 {
            return Err(Error::Config("policy network sizes must be positive".into()));
        }
        let mut sizes = vec![spec.input];
        sizes.extend(&spec.hidden);
        sizes.push(spec.n_actions);
        let mut params = Params::new();
        let mlp = Mlp::new(&mut params, "pi", &sizes, Activation::Relu, Activation::Identity, rng);
        let opt = Adam::new(spec.lr).with_clip(10.0);
        Ok(Self { spec, params, mlp, opt, updates: 0 })
    }

    /// Clamped logits for a batch.
    pub fn logits(&self, tape: &mut Tape, params: &Params, x: Var) -> Var {
        let z = self.mlp.forward(tape, params, x);
        tape.clamp(z, -LOGIT_CLAMP, LOGIT_CLAMP)
    }

    pub fn probs(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.constant(batch_tensor(&[state], self.spec.input)?);
        let z = self.logits(&mut tape, &self.params, x);
        Ok(softmax(&tape.value(z).data))
    }

    pub fn sample(&self, state: &[f64], rng: &mut impl Rng) -> Result<usize> {
        let p = self.probs(state)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return Ok(i);
            }
        }
        Ok(p.len() - 1)
    }

    /// Mean cross-entropy of the stored actions under the policy.
    pub fn supervised_loss(&self, tape: &mut Tape, params: &Params, batch: &[(&[f64], usize)]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::DegenerateBatch("empty policy batch".into()));
        }
        if batch.iter().any(|(_, a)| *a >= self.spec.n_actions) {
            return Err(Error::InvalidInput("action index outside the policy's action set".into()));
        }
        let states: Vec<&[f64]> = batch.iter().map(|(s, _)| *s).collect();
        let x = tape.constant(batch_tensor(&states, self.spec.input)?);
        let z = self.logits(tape, params, x);
        let lp = tape.log_softmax_rows(z);
        let acts: Vec<usize> = batch.iter().map(|(_, a)| *a).collect();
        let mask = tape.constant(one_hot(&acts, self.spec.n_actions));
        let picked = tape.mul(lp, mask);
        let s = tape.sum(picked);
        Ok(tape.scale(s, -1.0 / batch.len() as f64))
    }

    pub fn supervised_update(&mut self, batch: &[(&[f64], usize)]) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = self.supervised_loss(&mut tape, &self.params, batch)?;
        let v = tape.scalar_value(loss);
        let g = tape.backward(loss).for_params(&self.params);
        self.opt.step(&mut self.params, &g);
        self.updates += 1;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    fn net() -> AvgPolicyNetwork {
        AvgPolicyNetwork::new(PolicySpec::new(2, 3), &mut rand_chacha::ChaCha8Rng::seed_from_u64(2)).unwrap()
    }

    #[test]
    fn probabilities_form_a_distribution() {
        let p = net().probs(&[0.4, -2.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn uniform_policy_costs_ln3() {
        let mut n = net();
        n.params.set_flat(&vec![0.0; n.params.count()]);
        let s = [0.1, 0.2];
        let mut tape = Tape::new();
        let l = n.supervised_loss(&mut tape, &n.params, &[(&s, 0), (&s, 2)]).unwrap();
        assert!((tape.scalar_value(l) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fits_one_hot_labels() {
        let mut n = net();
        let (a, b) = ([1.0, 0.0], [0.0, 1.0]);
        let batch: Vec<(&[f64], usize)> = vec![(&a, 2), (&b, 1)];
        for _ in 0..3000 {
            n.supervised_update(&batch).unwrap();
        }
        let mut tape = Tape::new();
        let l = n.supervised_loss(&mut tape, &n.params, &batch).unwrap();
        assert!(tape.scalar_value(l) <= 1e-3);
    }

    #[test]
    fn empty_batch_is_degenerate() {
        assert!(matches!(net().supervised_update(&[]), Err(Error::DegenerateBatch(_))));
    }
}
