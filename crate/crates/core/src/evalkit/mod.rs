//! Trading metrics, generator fidelity metrics, the directional signed-rank test and the t-SNE
//! drift diagnostic.

mod fidelity;
mod metrics;
mod tsne;
mod wilcoxon;

pub use fidelity::{correlation_diffs, evaluate_generator, stylized_fact_diffs, CorrDiffs, GenEvalReport, StylizedDiffs};
pub use metrics::{arr, max_drawdown, period_returns, sharpe, sharpe_annualized, BacktestReport, TRADING_DAYS};
pub use tsne::{silhouette_1d, tsne_1d, tsne_drift_diagnostic, TsneConfig, TsneRow};
pub use wilcoxon::{signed_ranks, wilcoxon_directional, WilcoxonResult, EXACT_MAX_N};
