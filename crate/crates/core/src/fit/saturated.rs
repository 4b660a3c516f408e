use super::{FitDiagnostics, ModelFit, ModelKind, ModelParams};
use crate::error::Result;
use crate::tables::{empirical_table, CountsTable};

/// One free distribution per setting pair: the empirical frequencies.
pub fn fit_saturated(c: &CountsTable) -> Result<ModelFit> {
    let table = empirical_table(c)?;
    Ok(ModelFit::assemble(
        ModelKind::Saturated,
        ModelParams::Saturated,
        c,
        table,
        FitDiagnostics::closed_form(),
    ))
}
