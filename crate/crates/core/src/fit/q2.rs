use std::f64::consts::TAU;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::{FitConfig, FitDiagnostics, ModelFit, ModelKind, ModelParams};
use crate::error::Result;
use crate::tables::{Angles, ConditionalTable, CountsTable, SETTINGS};

const V_MAX: f64 = 1.0 - 1e-12;
const MAX_NEWTON: u64 = 200;
const ROUNDOFF_GRAD: f64 = 1e-7;

/// Visibility and common phase of the cosine family
/// `E(alpha, beta) = V cos(alpha + beta + phi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Q2Params {
    pub v: f64,
    pub phi: f64,
}

pub fn q2_table(v: f64, phi: f64, angles: &Angles) -> Result<ConditionalTable> {
    let e = angles.sums().map(|psi| v * (psi + phi).cos());
    ConditionalTable::from_correlators(e)
}

/// Same/diff counts and angle sums, with the mean negative log-likelihood
/// (nats, constant `ln 4` dropped) and its derivatives in `(V, phi)`.
struct Objective {
    same: [f64; 4],
    diff: [f64; 4],
    psi: [f64; 4],
    n: f64,
}

impl Objective {
    fn new(c: &CountsTable, angles: &Angles) -> Self {
        let mut same = [0.0; 4];
        let mut diff = [0.0; 4];
        for (s, &(x, y)) in SETTINGS.iter().enumerate() {
            let (sm, df) = c.same_diff(x, y);
            same[s] = sm as f64;
            diff[s] = df as f64;
        }
        Self {
            same,
            diff,
            psi: angles.sums(),
            n: c.total() as f64,
        }
    }

    fn value(&self, v: f64, phi: f64) -> f64 {
        let mut acc = 0.0;
        for s in 0..4 {
            let e = v * (self.psi[s] + phi).cos();
            if self.same[s] > 0.0 {
                acc -= self.same[s] * (1.0 + e).max(1e-300).ln();
            }
            if self.diff[s] > 0.0 {
                acc -= self.diff[s] * (1.0 - e).max(1e-300).ln();
            }
        }
        acc / self.n
    }

    fn derivatives(&self, v: f64, phi: f64) -> (Vector2<f64>, Matrix2<f64>) {
        let mut grad = Vector2::zeros();
        let mut hess = Matrix2::zeros();
        for s in 0..4 {
            let (sn, cs) = (self.psi[s] + phi).sin_cos();
            for (sign, m) in [(1.0, self.same[s]), (-1.0, self.diff[s])] {
                if m == 0.0 {
                    continue;
                }
                let h = (1.0 + sign * v * cs).max(1e-300);
                let dh = Vector2::new(sign * cs, -sign * v * sn);
                let d2h = Matrix2::new(0.0, -sign * sn, -sign * sn, -sign * v * cs);
                let w = m / self.n;
                grad -= dh * (w / h);
                hess -= (d2h / h - dh * dh.transpose() / (h * h)) * w;
            }
        }
        (grad, hess)
    }
}

fn project(p: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(p[0].clamp(0.0, V_MAX), p[1])
}

/// Gradient with components that push against an active bound removed.
fn projected_gradient(p: &Vector2<f64>, g: &Vector2<f64>) -> Vector2<f64> {
    let mut pg = *g;
    if (p[0] <= 0.0 && g[0] > 0.0) || (p[0] >= V_MAX && g[0] < 0.0) {
        pg[0] = 0.0;
    }
    pg
}

fn grid_start(obj: &Objective, cfg: &FitConfig) -> (f64, f64) {
    let nv = cfg.q2_grid_v.max(2);
    let nphi = cfg.q2_grid_phi.max(1);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    // phi-major order so ties keep the smallest phi.
    for j in 0..nphi {
        let phi = TAU * j as f64 / nphi as f64;
        for i in 0..nv {
            let v = (i as f64 / (nv - 1) as f64).min(V_MAX);
            let f = obj.value(v, phi);
            if f < best.0 {
                best = (f, v, phi);
            }
        }
    }
    (best.1, best.2)
}

/// Coarse grid over `(V, phi)` followed by projected Newton refinement.
pub fn fit_q2(c: &CountsTable, cfg: &FitConfig) -> Result<ModelFit> {
    c.require_all_settings()?;
    let obj = Objective::new(c, &cfg.angles);
    let (v0, phi0) = grid_start(&obj, cfg);

    let mut p = Vector2::new(v0, phi0);
    let mut f = obj.value(p[0], p[1]);
    let mut diag = FitDiagnostics {
        iterations: 0,
        converged: false,
        grad_norm: f64::INFINITY,
        step_norm: 0.0,
    };

    while diag.iterations < MAX_NEWTON {
        let (g, h) = obj.derivatives(p[0], p[1]);
        let pg = projected_gradient(&p, &g);
        diag.grad_norm = pg.norm();
        if diag.grad_norm < cfg.q2_grad_tol {
            diag.converged = true;
            break;
        }
        diag.iterations += 1;

        let v_pinned = pg[0] == 0.0 && g[0] != 0.0;
        let mut dir = if v_pinned {
            let curv = h[(1, 1)];
            Vector2::new(0.0, if curv > 0.0 { -g[1] / curv } else { -g[1] })
        } else {
            match h.cholesky() {
                Some(ch) => -ch.solve(&g),
                None => -g,
            }
        };
        if dir.dot(&pg) >= 0.0 {
            dir = -pg;
        }

        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-16 {
            let trial = project(p + dir * t);
            let ft = obj.value(trial[0], trial[1]);
            if ft <= f + 1e-4 * g.dot(&(trial - p)) {
                diag.step_norm = (trial - p).norm();
                if diag.step_norm == 0.0 {
                    break;
                }
                p = trial;
                f = ft;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // Newton can no longer move p: the gradient is at its round-off
            // floor, which is accepted up to ROUNDOFF_GRAD.
            diag.step_norm = 0.0;
            diag.converged = diag.grad_norm < ROUNDOFF_GRAD;
            break;
        }
    }

    let v = p[0];
    let phi = if v < 1e-12 { 0.0 } else { p[1].rem_euclid(TAU) };
    let table = q2_table(v, phi, &cfg.angles)?;
    Ok(ModelFit::assemble(
        ModelKind::Q2,
        ModelParams::Q2(Q2Params { v, phi }),
        c,
        table,
        diag,
    ))
}
