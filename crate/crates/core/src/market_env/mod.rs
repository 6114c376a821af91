//! Trading environment: historical replay or generator rollout, with an adversarial macro
//! perturbation hook.

mod env;
mod indicators;
mod perturb;

pub use env::{trade_log_csv, trading_reward, Action, EnvConfig, MarketEnv, Observation, StepOutcome, TradeRecord, N_ACTIONS};
pub use indicators::{compute_indicators, IndicatorScaler, INDICATOR_NAMES, INDICATOR_WINDOW, N_INDICATORS};
pub use perturb::{apply_perturbation, MacroPerturbation};
