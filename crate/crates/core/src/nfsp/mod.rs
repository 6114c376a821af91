//! Belief-conditioned neural fictitious self-play between a trader and a macro adversary.

mod config;
mod matrix;
mod player;
mod train;

pub use config::NfspConfig;
pub use matrix::{total_variation, train_matrix_game, MatrixGame, MatrixGameResult};
pub use player::{Branch, NfspPlayer};
pub use train::{
    evaluate_policy, train, train_adversary_against, training_log_csv, AdversaryPolicy, Counters, LogRow, ObsLayout, PolicyMode,
    StepInfo, TrainArtifacts, TrainState, TraderPolicy,
};
