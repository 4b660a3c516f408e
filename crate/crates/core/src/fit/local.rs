//! Local-polytope fit as a mixture over the 16 deterministic strategies,
//! fitted by EM.

use serde::{Deserialize, Serialize};

use super::{FitConfig, FitDiagnostics, ModelFit, ModelKind, ModelParams};
use crate::error::Result;
use crate::tables::{cell_index, ConditionalTable, CountsTable, SETTINGS};

/// Mixture weights over strategies `lambda = (a_0, a_1, b_0, b_1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalWeights {
    pub w: [f64; 16],
}

/// Outputs of strategy `lambda`; bit 3 is `a_0`, bit 0 is `b_1`, a set bit
/// meaning `-1`.
pub fn strategy_outputs(lambda: usize) -> ([i8; 2], [i8; 2]) {
    let sign = |bit: usize| if (lambda >> bit) & 1 == 1 { -1 } else { 1 };
    ([sign(3), sign(2)], [sign(1), sign(0)])
}

/// `cells[lambda][setting]` is the cell index strategy `lambda` fills.
fn strategy_cells() -> [[usize; 4]; 16] {
    let mut out = [[0; 4]; 16];
    for (lambda, row) in out.iter_mut().enumerate() {
        let (a, b) = strategy_outputs(lambda);
        for (s, &(x, y)) in SETTINGS.iter().enumerate() {
            row[s] = cell_index(a[x], b[y]);
        }
    }
    out
}

pub fn deterministic_table(lambda: usize) -> ConditionalTable {
    mixture_table(&one_hot(lambda))
}

fn one_hot(lambda: usize) -> [f64; 16] {
    let mut w = [0.0; 16];
    w[lambda] = 1.0;
    w
}

pub(crate) fn mixture_probs(w: &[f64; 16]) -> [[f64; 4]; 4] {
    let cells = strategy_cells();
    let mut probs = [[0.0; 4]; 4];
    for (lambda, &wl) in w.iter().enumerate() {
        for s in 0..4 {
            probs[s][cells[lambda][s]] += wl;
        }
    }
    probs
}

fn mixture_table(w: &[f64; 16]) -> ConditionalTable {
    ConditionalTable::renormalized(mixture_probs(w)).expect("mixture rows have unit mass")
}

fn log_likelihood(counts: &[[f64; 4]; 4], probs: &[[f64; 4]; 4]) -> f64 {
    let mut acc = 0.0;
    for s in 0..4 {
        for k in 0..4 {
            if counts[s][k] > 0.0 {
                acc += counts[s][k] * probs[s][k].max(1e-300).ln();
            }
        }
    }
    acc
}

/// Largest excess of `(1/n) sum_s n_s / p_s` over 1 among the vertices;
/// zero exactly at the maximum-likelihood mixture.
fn kkt_residual(
    counts: &[[f64; 4]; 4],
    probs: &[[f64; 4]; 4],
    cells: &[[usize; 4]; 16],
    n: f64,
) -> f64 {
    (0..16)
        .map(|lambda| {
            let support: f64 = (0..4)
                .map(|s| {
                    let k = cells[lambda][s];
                    if counts[s][k] > 0.0 {
                        counts[s][k] / probs[s][k]
                    } else {
                        0.0
                    }
                })
                .sum();
            (support / n - 1.0).max(0.0)
        })
        .fold(0.0, f64::max)
}

pub fn fit_local(c: &CountsTable, cfg: &FitConfig) -> Result<ModelFit> {
    fit_local_traced(c, cfg, false).map(|(fit, _)| fit)
}

/// EM from uniform weights. With `trace`, also returns the log-likelihood
/// (nats) after every iteration.
pub fn fit_local_traced(
    c: &CountsTable,
    cfg: &FitConfig,
    trace: bool,
) -> Result<(ModelFit, Vec<f64>)> {
    c.require_all_settings()?;
    let counts = c.as_array().map(|row| row.map(|v| v as f64));
    let n = c.total() as f64;
    let cells = strategy_cells();

    let mut w = [1.0 / 16.0; 16];
    let mut probs = mixture_probs(&w);
    let mut ll = log_likelihood(&counts, &probs);
    let mut history = Vec::new();
    if trace {
        history.push(ll);
    }
    let mut diag = FitDiagnostics {
        iterations: 0,
        converged: false,
        grad_norm: f64::INFINITY,
        step_norm: f64::INFINITY,
    };

    while diag.iterations < cfg.em_max_iter {
        // w'_l = w_l * sum_s n_{s, cell(l,s)} / p_{s, cell(l,s)} / n
        let mut ratio = [[0.0; 4]; 4];
        for s in 0..4 {
            for k in 0..4 {
                if counts[s][k] > 0.0 {
                    ratio[s][k] = counts[s][k] / probs[s][k];
                }
            }
        }
        let mut next = [0.0; 16];
        for lambda in 0..16 {
            let support: f64 = (0..4).map(|s| ratio[s][cells[lambda][s]]).sum();
            next[lambda] = w[lambda] * support / n;
        }
        let mass: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= mass);

        w = next;
        probs = mixture_probs(&w);
        let next_ll = log_likelihood(&counts, &probs);
        diag.iterations += 1;
        let rel = (next_ll - ll).abs() / ll.abs().max(1.0);
        diag.step_norm = rel;
        ll = next_ll;
        if trace {
            history.push(ll);
        }
        if rel < cfg.em_rel_tol {
            diag.converged = true;
            break;
        }
    }

    diag.grad_norm = kkt_residual(&counts, &probs, &cells, n);

    let table = mixture_table(&w);
    let fit = ModelFit::assemble(
        ModelKind::Local,
        ModelParams::Local(LocalWeights { w }),
        c,
        table,
        diag,
    );
    Ok((fit, history))
}
