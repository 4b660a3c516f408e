use serde::{Deserialize, Serialize};

use super::{FitDiagnostics, ModelFit, ModelKind, ModelParams};
use crate::error::Result;
use crate::tables::{ConditionalTable, CountsTable, SETTINGS};

/// Correlators are kept this far inside `[-1, 1]`.
const EDGE: f64 = 1e-12;

/// One correlator per setting pair, unbiased marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Q4Params {
    pub e: [f64; 4],
}

/// Closed-form maximizer of `n_same ln(1+E) + n_diff ln(1-E)`.
pub fn fit_q4(c: &CountsTable) -> Result<ModelFit> {
    c.require_all_settings()?;
    let e = SETTINGS.map(|(x, y)| {
        let (same, diff) = c.same_diff(x, y);
        let raw = (same as f64 - diff as f64) / (same + diff) as f64;
        raw.clamp(-1.0 + EDGE, 1.0 - EDGE)
    });
    let table = ConditionalTable::from_correlators(e)?;
    Ok(ModelFit::assemble(
        ModelKind::Q4,
        ModelParams::Q4(Q4Params { e }),
        c,
        table,
        FitDiagnostics::closed_form(),
    ))
}
