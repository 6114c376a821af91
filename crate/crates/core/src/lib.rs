//! Belief-aware trading agents trained against a macro-perturbing adversary inside a
//! learned market simulator.

pub mod agents;
pub mod belief;
pub mod cli;
pub mod dataio;
pub mod genmodel;
pub mod market_env;
pub mod error;
pub mod evalkit;
pub mod nfsp;
pub mod nn;
pub mod rng;
pub mod stats;
pub mod store;

pub use error::{Error, Result};
