//! Independent test-side oracles shared by the integration suites.
#![allow(dead_code)]

use chsh_mdl::tables::{ConditionalTable, CountsTable, Design};
use nalgebra::{SMatrix, SVector};
use rand::Rng;

type V8 = SVector<f64, 8>;
type M8 = SMatrix<f64, 8, 8>;

const CELLS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

pub fn random_counts<R: Rng>(rng: &mut R, lo: u64, hi: u64) -> CountsTable {
    loop {
        let c = CountsTable::from_fn(|_, _, _, _| rng.random_range(lo..=hi));
        if c.require_all_settings().is_ok() {
            return c;
        }
    }
}

pub fn random_conditional<R: Rng>(rng: &mut R) -> ConditionalTable {
    let raw = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(0.01..1.0)));
    ConditionalTable::renormalized(raw).unwrap()
}

pub fn random_design<R: Rng>(rng: &mut R) -> Design {
    let w: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.05..1.0));
    let s: f64 = w.iter().sum();
    let mut r = w.map(|v| v / s);
    r[3] = 1.0 - r[0] - r[1] - r[2];
    Design::new(r, "random").unwrap()
}

/// Row of the affine map `theta -> 4 P(a,b|x,y) - 1` in the
/// (mA0, mA1, mB0, mB1, E00, E01, E10, E11) parametrization.
fn cell_row(s: usize, k: usize) -> V8 {
    let (x, y) = (s / 2, s % 2);
    let (a, b) = CELLS[k];
    let mut r = V8::zeros();
    r[x] = a;
    r[2 + y] = b;
    r[4 + s] = a * b;
    r
}

/// Linear constraints `c . theta + d >= 0` of the local polytope: 16 cell
/// positivity rows and the 8 CHSH facets `sigma . E <= 2` with an odd
/// number of negative signs.
fn local_constraints() -> Vec<(V8, f64)> {
    let mut out = Vec::new();
    for s in 0..4 {
        for k in 0..4 {
            out.push((cell_row(s, k), 1.0));
        }
    }
    for mask in 0u32..16 {
        if mask.count_ones() % 2 == 1 {
            let mut c = V8::zeros();
            for j in 0..4 {
                let sign = if mask >> j & 1 == 1 { -1.0 } else { 1.0 };
                c[4 + j] = -sign;
            }
            out.push((c, 2.0));
        }
    }
    out
}

fn nll_bits(c: &CountsTable, theta: &V8) -> f64 {
    let mut total = 0.0;
    for s in 0..4 {
        for k in 0..4 {
            let n = c.as_array()[s][k] as f64;
            if n > 0.0 {
                let g = 1.0 + cell_row(s, k).dot(theta);
                total -= n * (g / 4.0).log2();
            }
        }
    }
    total
}

/// Maximum-likelihood negative log2-likelihood over the local polytope,
/// solved as a log-barrier problem in correlator coordinates.
pub fn local_facet_oracle(c: &CountsTable) -> f64 {
    let cons = local_constraints();
    let counts: Vec<(V8, f64)> = (0..16)
        .map(|i| (cell_row(i / 4, i % 4), c.as_array()[i / 4][i % 4] as f64))
        .collect();
    let objective = |t: &V8, mu: f64| -> f64 {
        let mut f = 0.0;
        for (r, n) in &counts {
            let g = 1.0 + r.dot(t);
            if g <= 0.0 {
                return f64::INFINITY;
            }
            f -= n * g.ln();
        }
        for (r, d) in &cons {
            let h = r.dot(t) + d;
            if h <= 0.0 {
                return f64::INFINITY;
            }
            f -= mu * h.ln();
        }
        f
    };
    let mut theta = V8::zeros();
    let mut mu = 1.0;
    while mu > 1e-13 {
        for _ in 0..200 {
            let mut g = V8::zeros();
            let mut h = M8::zeros();
            for (r, n) in &counts {
                let v = 1.0 + r.dot(&theta);
                g -= r * (n / v);
                h += r * r.transpose() * (n / (v * v));
            }
            for (r, d) in &cons {
                let v = r.dot(&theta) + d;
                g -= r * (mu / v);
                h += r * r.transpose() * (mu / (v * v));
            }
            let step = -h
                .cholesky()
                .expect("barrier Hessian is positive definite")
                .solve(&g);
            let decrement = -g.dot(&step);
            if decrement < 1e-14 {
                break;
            }
            let f0 = objective(&theta, mu);
            let mut t = 1.0;
            loop {
                let trial = theta + step * t;
                if objective(&trial, mu) <= f0 - 0.25 * t * decrement {
                    theta = trial;
                    break;
                }
                t *= 0.5;
                if t < 1e-20 {
                    break;
                }
            }
        }
        mu *= 0.1;
    }
    nll_bits(c, &theta)
}

fn nelder_mead(f: &dyn Fn(&V8) -> f64, start: V8, scale: f64, iters: usize) -> (V8, f64) {
    let mut simplex: Vec<(V8, f64)> = (0..9)
        .map(|i| {
            let mut p = start;
            if i > 0 {
                p[i - 1] += scale;
            }
            (p, f(&p))
        })
        .collect();
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let centroid = simplex[..8].iter().fold(V8::zeros(), |acc, p| acc + p.0) / 8.0;
        let worst = simplex[8];
        let reflect = centroid + (centroid - worst.0);
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let expand = centroid + (centroid - worst.0) * 2.0;
            let fe = f(&expand);
            simplex[8] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[7].1 {
            simplex[8] = (reflect, fr);
        } else {
            let contract = centroid + (worst.0 - centroid) * 0.5;
            let fc = f(&contract);
            if fc < worst.1 {
                simplex[8] = (contract, fc);
            } else {
                let best = simplex[0].0;
                for p in simplex.iter_mut().skip(1) {
                    p.0 = best + (p.0 - best) * 0.5;
                    p.1 = f(&p.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Randomized multi-start Nelder-Mead over the no-signalling polytope.
pub fn nosig_direct_search<R: Rng>(c: &CountsTable, starts: usize, rng: &mut R) -> f64 {
    let f = |t: &V8| -> f64 {
        for s in 0..4 {
            for k in 0..4 {
                if 1.0 + cell_row(s, k).dot(t) < 0.0 {
                    return f64::INFINITY;
                }
            }
        }
        nll_bits(c, t)
    };
    let mut best = f64::INFINITY;
    for _ in 0..starts {
        let start = V8::from_fn(|_, _| rng.random_range(-0.3..0.3));
        if !f(&start).is_finite() {
            continue;
        }
        let (mut p, mut v) = nelder_mead(&f, start, 0.2, 3000);
        for scale in [0.05, 0.01, 1e-3, 1e-4] {
            let r = nelder_mead(&f, p, scale, 3000);
            p = r.0;
            v = r.1;
        }
        best = best.min(v);
    }
    best
}

/// Correlator maximizing `n_same ln(1+E) + n_diff ln(1-E)` by successive
/// grid refinement down to a 1e-9 step.
pub fn q4_grid_oracle(n_same: u64, n_diff: u64) -> f64 {
    let f = |e: f64| {
        let term = |n: u64, v: f64| if n == 0 { 0.0 } else { n as f64 * v.ln() };
        term(n_same, 1.0 + e) + term(n_diff, 1.0 - e)
    };
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut best = 0.0;
    while hi - lo > 1e-9 {
        let steps = 200;
        let h = (hi - lo) / steps as f64;
        let mut best_f = f64::NEG_INFINITY;
        for i in 0..=steps {
            let e = lo + h * i as f64;
            let v = f(e);
            if v > best_f {
                best_f = v;
                best = e;
            }
        }
        lo = (best - 2.0 * h).max(-1.0);
        hi = (best + 2.0 * h).min(1.0);
    }
    best
}

/// Fraction of simulated experiments whose Hoeffding lower win rate does
/// not exceed the true win rate.
pub fn hoeffding_coverage<R: Rng>(
    table: &ConditionalTable,
    n: u64,
    alpha: f64,
    experiments: usize,
    rng: &mut R,
) -> f64 {
    use chsh_mdl::tables::{win_rate_weighted, win_sign, OUTCOMES, SETTINGS};
    use chsh_mdl::witness::hoeffding_certificate;
    let design = Design::uniform();
    let omega_true = win_rate_weighted(table, &design);
    let mut covered = 0;
    for _ in 0..experiments {
        let mut wins = 0u64;
        for _ in 0..n {
            let s = rng.random_range(0..4);
            let (x, y) = SETTINGS[s];
            let u: f64 = rng.random();
            let probs = table.setting(x, y);
            let mut acc = 0.0;
            let mut k = 3;
            for (j, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    k = j;
                    break;
                }
            }
            let (a, b) = OUTCOMES[k];
            if a * b == win_sign(x, y) {
                wins += 1;
            }
        }
        let omega_hat = wins as f64 / n as f64;
        let cert = hoeffding_certificate(omega_hat, n, alpha, &design).unwrap();
        if cert.omega_lower.unwrap() <= omega_true.max(cert.omega_loc) {
            covered += 1;
        }
    }
    covered as f64 / experiments as f64
}
