use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::types::{MacroPanel, MarketTensor, WindowSpec};
use crate::error::{Error, Result};

/// Index ranges of one `(history, target, macro)` training triple ending at day `t`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowTriple {
    pub t: usize,
    /// `[t-2L+1, t-L]`
    pub history: Range<usize>,
    /// `[t-L+1, t]`
    pub target: Range<usize>,
    /// `[t-2L+1, t]`
    pub macro_window: Range<usize>,
}

impl WindowTriple {
    pub fn ending_at(t: usize, spec: WindowSpec) -> Self {
        let l = spec.length;
        assert!(t + 1 >= 2 * l, "window ending at {t} needs {} days of history", 2 * l);
        Self { t, history: t + 1 - 2 * l..t + 1 - l, target: t + 1 - l..t + 1, macro_window: t + 1 - 2 * l..t + 1 }
    }
}

/// Every admissible triple whose full span lies inside `range`.
pub fn make_windows(panel: &MarketTensor, macro_panel: &MacroPanel, spec: WindowSpec, range: Range<usize>) -> Result<Vec<WindowTriple>> {
    if macro_panel.n_time() != panel.n_time() || macro_panel.dates != panel.dates {
        return Err(Error::MisalignedPanels(format!(
            "market has {} days, macro has {}",
            panel.n_time(),
            macro_panel.n_time()
        )));
    }
    if range.end > panel.n_time() {
        return Err(Error::Shape(format!("range end {} beyond {} days", range.end, panel.n_time())));
    }
    let span = spec.macro_length();
    if range.len() < span {
        log::warn!("range of {} days is shorter than 2L = {span}; no windows", range.len());
        return Ok(Vec::new());
    }
    Ok((range.start + span - 1..range.end).map(|t| WindowTriple::ending_at(t, spec)).collect())
}
