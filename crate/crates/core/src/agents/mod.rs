//! Function-approximator agents and their replay memories.

mod adversary;
mod baselines;
mod buffers;
mod policy;
mod qnet;

pub use adversary::{adversary_update, AdversaryTransition, PerturbationCatalog};
pub use baselines::{buy_and_hold, dqn_baseline_train, linear_epsilon, rollout, DqnAgent, DqnConfig};
pub use buffers::{CircularBuffer, ReservoirBuffer};
pub use policy::{AvgPolicyNetwork, PolicySpec};
pub use qnet::{argmax, td_target, QNetSpec, QNetwork, Transition};
