//! Maximum-likelihood fits of the five model classes.
//!
//! Every class is fitted with the multinomial-per-setting likelihood: the
//! setting totals `n_xy` are conditioned on, so the design factor cancels
//! from all comparisons.

mod local;
mod nosig;
mod q2;
mod q4;
mod saturated;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::{Angles, ConditionalTable, CountsTable};

pub use local::{deterministic_table, fit_local, fit_local_traced, strategy_outputs, LocalWeights};
pub use nosig::{fit_nosig, NoSigParams};
pub use q2::{fit_q2, q2_table, Q2Params};
pub use q4::{fit_q4, Q4Params};
pub use saturated::fit_saturated;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    Q2,
    Q4,
    #[serde(rename = "LOCAL")]
    Local,
    #[serde(rename = "NOSIG")]
    NoSig,
    #[serde(rename = "SATURATED")]
    Saturated,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Q2,
        ModelKind::Q4,
        ModelKind::Local,
        ModelKind::NoSig,
        ModelKind::Saturated,
    ];

    /// Nominal effective dimension.
    pub fn dim(self) -> u32 {
        match self {
            ModelKind::Q2 => 2,
            ModelKind::Q4 => 4,
            ModelKind::Local | ModelKind::NoSig => 8,
            ModelKind::Saturated => 12,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Q2 => "Q2",
            ModelKind::Q4 => "Q4",
            ModelKind::Local => "LOCAL",
            ModelKind::NoSig => "NOSIG",
            ModelKind::Saturated => "SATURATED",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "q2" => Ok(ModelKind::Q2),
            "q4" => Ok(ModelKind::Q4),
            "local" | "l" => Ok(ModelKind::Local),
            "nosig" | "ns" => Ok(ModelKind::NoSig),
            "saturated" | "sat" | "s" => Ok(ModelKind::Saturated),
            other => Err(Error::invalid(format!("unknown model class {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Q2(Q2Params),
    Q4(Q4Params),
    Local(LocalWeights),
    NoSig(NoSigParams),
    Saturated,
}

/// Optimizer bookkeeping attached to every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: u64,
    pub converged: bool,
    /// Final gradient norm where the optimizer tracks one.
    pub grad_norm: f64,
    /// Final step size (or relative objective change for EM).
    pub step_norm: f64,
}

impl FitDiagnostics {
    pub(crate) fn closed_form() -> Self {
        Self {
            iterations: 0,
            converged: true,
            grad_norm: 0.0,
            step_norm: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: ModelKind,
    pub params: ModelParams,
    pub neg_log2_lik: f64,
    pub dim: u32,
    pub fitted_table: ConditionalTable,
    pub diagnostics: FitDiagnostics,
}

impl ModelFit {
    pub(crate) fn assemble(
        model: ModelKind,
        params: ModelParams,
        counts: &CountsTable,
        fitted_table: ConditionalTable,
        diagnostics: FitDiagnostics,
    ) -> Self {
        Self {
            model,
            params,
            neg_log2_lik: counts.neg_log2_likelihood(&fitted_table),
            dim: model.dim(),
            fitted_table,
            diagnostics,
        }
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.converged
    }
}

/// Optimizer settings shared by all fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub angles: Angles,
    pub q2_grid_v: usize,
    pub q2_grid_phi: usize,
    pub q2_grad_tol: f64,
    pub em_rel_tol: f64,
    pub em_max_iter: u64,
    pub barrier_start: f64,
    pub barrier_end: f64,
    pub barrier_shrink: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            angles: Angles::wang(),
            q2_grid_v: 101,
            q2_grid_phi: 256,
            q2_grad_tol: 1e-9,
            em_rel_tol: 1e-10,
            em_max_iter: 10_000,
            barrier_start: 1.0,
            barrier_end: 1e-10,
            barrier_shrink: 0.25,
        }
    }
}

pub fn fit_model(kind: ModelKind, c: &CountsTable, cfg: &FitConfig) -> Result<ModelFit> {
    match kind {
        ModelKind::Q2 => fit_q2(c, cfg),
        ModelKind::Q4 => fit_q4(c),
        ModelKind::Local => fit_local(c, cfg),
        ModelKind::NoSig => fit_nosig(c, cfg),
        ModelKind::Saturated => fit_saturated(c),
    }
}

/// Gain of the saturated fit over the best local fit, in bits per trial.
pub fn full_table_gain(c: &CountsTable, cfg: &FitConfig) -> Result<f64> {
    let local = fit_local(c, cfg)?;
    let sat = fit_saturated(c)?;
    Ok(gain_from_fits(&local, &sat, c.total()))
}

pub fn gain_from_fits(local: &ModelFit, saturated: &ModelFit, n: u64) -> f64 {
    ((local.neg_log2_lik - saturated.neg_log2_lik) / n as f64).max(0.0)
}
