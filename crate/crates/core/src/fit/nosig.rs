//! No-signalling fit by a logarithmic-barrier interior method.
//!
//! Parametrization: `P(a,b|x,y) = (1 + a mA_x + b mB_y + ab E_xy) / 4`, with
//! `theta = (mA_0, mA_1, mB_0, mB_1, E_00, E_01, E_10, E_11)`. Every cell is
//! affine in `theta`, so the negative log-likelihood is convex and each
//! positivity constraint is a half-space.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::{FitConfig, FitDiagnostics, ModelFit, ModelKind, ModelParams};
use crate::error::Result;
use crate::tables::{empirical_table, ConditionalTable, CountsTable, OUTCOMES, SETTINGS};

type Vec8 = SVector<f64, 8>;
type Mat8 = SMatrix<f64, 8, 8>;

const MAX_NEWTON_PER_STAGE: u64 = 200;
const INIT_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoSigParams {
    pub m_a: [f64; 2],
    pub m_b: [f64; 2],
    pub e: [f64; 4],
}

impl NoSigParams {
    fn from_vec(t: &Vec8) -> Self {
        Self {
            m_a: [t[0], t[1]],
            m_b: [t[2], t[3]],
            e: [t[4], t[5], t[6], t[7]],
        }
    }

    fn to_vec(&self) -> Vec8 {
        Vec8::from_column_slice(&[
            self.m_a[0],
            self.m_a[1],
            self.m_b[0],
            self.m_b[1],
            self.e[0],
            self.e[1],
            self.e[2],
            self.e[3],
        ])
    }

    /// `4 P(a,b|x,y)` for all 16 cells, setting-major.
    pub fn scaled_cells(&self) -> [f64; 16] {
        let t = self.to_vec();
        let rows = constraint_rows();
        std::array::from_fn(|i| 1.0 + rows[i].dot(&t))
    }

    pub fn table(&self) -> Result<ConditionalTable> {
        let g = self.scaled_cells();
        let probs = std::array::from_fn(|s| std::array::from_fn(|k| (g[4 * s + k] / 4.0).max(0.0)));
        ConditionalTable::renormalized(probs)
    }
}

/// Row `i = 4*setting + cell` of the affine map `4P - 1`.
fn constraint_rows() -> [Vec8; 16] {
    std::array::from_fn(|i| {
        let (x, y) = SETTINGS[i / 4];
        let (a, b) = OUTCOMES[i % 4];
        let mut row = Vec8::zeros();
        row[x] = a as f64;
        row[2 + y] = b as f64;
        row[4 + 2 * x + y] = (a * b) as f64;
        row
    })
}

struct Barrier {
    rows: [Vec8; 16],
    counts: [f64; 16],
}

impl Barrier {
    fn slacks(&self, t: &Vec8) -> [f64; 16] {
        std::array::from_fn(|i| 1.0 + self.rows[i].dot(t))
    }

    /// `-sum (n_i + mu) ln g_i`; `+inf` outside the open feasible set.
    fn value(&self, t: &Vec8, mu: f64) -> f64 {
        let g = self.slacks(t);
        if g.iter().any(|&gi| gi <= 0.0) {
            return f64::INFINITY;
        }
        g.iter()
            .zip(&self.counts)
            .map(|(gi, ni)| -(ni + mu) * gi.ln())
            .sum()
    }

    fn derivatives(&self, t: &Vec8, mu: f64) -> (Vec8, Mat8) {
        let g = self.slacks(t);
        let mut grad = Vec8::zeros();
        let mut hess = Mat8::zeros();
        for ((row, &n), &gi) in self.rows.iter().zip(&self.counts).zip(&g) {
            let w = n + mu;
            grad -= row * (w / gi);
            hess += row * row.transpose() * (w / (gi * gi));
        }
        (grad, hess)
    }
}

/// Setting-averaged empirical marginals and clamped correlators, shrunk
/// toward the uniform table until every cell has slack `INIT_MARGIN`.
fn initial_point(c: &CountsTable) -> Result<Vec8> {
    let t = empirical_table(c)?;
    let mut theta = Vec8::zeros();
    for x in 0..2 {
        theta[x] = (0..2)
            .map(|y| {
                let p = t.setting(x, y);
                p[0] + p[1] - p[2] - p[3]
            })
            .sum::<f64>()
            / 2.0;
    }
    for y in 0..2 {
        theta[2 + y] = (0..2)
            .map(|x| {
                let p = t.setting(x, y);
                p[0] - p[1] + p[2] - p[3]
            })
            .sum::<f64>()
            / 2.0;
    }
    for (s, &(x, y)) in SETTINGS.iter().enumerate() {
        let p = t.setting(x, y);
        theta[4 + s] = (p[0] - p[1] - p[2] + p[3]).clamp(-0.99, 0.99);
    }
    let rows = constraint_rows();
    let feasible = |th: &Vec8| rows.iter().all(|r| 1.0 + r.dot(th) >= INIT_MARGIN);
    while !feasible(&theta) {
        theta *= 0.9;
    }
    Ok(theta)
}

pub fn fit_nosig(c: &CountsTable, cfg: &FitConfig) -> Result<ModelFit> {
    let mut theta = initial_point(c)?;
    let barrier = Barrier {
        rows: constraint_rows(),
        counts: std::array::from_fn(|i| c.as_array()[i / 4][i % 4] as f64),
    };
    let scale = (c.total() as f64).max(1.0);

    let mut diag = FitDiagnostics {
        iterations: 0,
        converged: true,
        grad_norm: 0.0,
        step_norm: 0.0,
    };
    let mut mu = cfg.barrier_start;
    loop {
        let stage_ok = newton_stage(&barrier, &mut theta, mu, scale, &mut diag);
        if mu <= cfg.barrier_end {
            diag.converged = stage_ok;
            break;
        }
        mu = (mu * cfg.barrier_shrink).max(cfg.barrier_end);
    }

    let params = NoSigParams::from_vec(&theta);
    let table = params.table()?;
    Ok(ModelFit::assemble(
        ModelKind::NoSig,
        ModelParams::NoSig(params),
        c,
        table,
        diag,
    ))
}

/// Damped Newton on one barrier subproblem. Returns whether the Newton
/// decrement fell below tolerance.
fn newton_stage(
    barrier: &Barrier,
    theta: &mut Vec8,
    mu: f64,
    scale: f64,
    diag: &mut FitDiagnostics,
) -> bool {
    let mut f = barrier.value(theta, mu);
    for _ in 0..MAX_NEWTON_PER_STAGE {
        let (g, h) = barrier.derivatives(theta, mu);
        diag.grad_norm = g.norm() / scale;
        let Some(ch) = h.cholesky() else {
            return false;
        };
        let step = -ch.solve(&g);
        let decrement = -g.dot(&step);
        if decrement / 2.0 <= 1e-13 * scale {
            return true;
        }
        diag.iterations += 1;

        let mut t = 1.0;
        loop {
            let trial = *theta + step * t;
            let ft = barrier.value(&trial, mu);
            if ft <= f - 0.25 * t * decrement {
                *theta = trial;
                f = ft;
                diag.step_norm = (step * t).norm();
                break;
            }
            t *= 0.5;
            if t < 1e-14 {
                // No further decrease at machine precision.
                return decrement / 2.0 <= 1e-9 * scale;
            }
        }
    }
    false
}
